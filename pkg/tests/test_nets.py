import math

import numpy as np
import pytest

from fedseq.nets import (
    CellKind,
    NetworkConfig,
    backward,
    canonical_variant,
    forward,
    init_network,
    param_shapes,
    predict_sequence,
)
from fedseq.params import LayoutMismatchError, ParameterSet
from fedseq.tensor import NonFiniteError, make_rng

from _helpers import relative_errors, tiny_config

KINDS = [(v, bi) for v in ("SimpleRNN", "GRU", "LSTM") for bi in (False, True)]


def test_init_shapes():
    cfg = NetworkConfig(CellKind("SimpleRNN"), input_size=40, hidden_size=8)
    p = init_network(cfg, make_rng(0))
    assert p["rnn.0.fwd.W_ih"].shape == (8, 40)
    assert p["rnn.0.fwd.W_hh"].shape == (8, 8)
    assert p["rnn.0.fwd.b"].shape == (8,)
    assert p["fc.W1"].shape == (10, 8) and p["fc.W2"].shape == (2, 10)


def test_lstm_layout_and_forget_bias():
    h = 6
    cfg = NetworkConfig(CellKind("LSTM", True), input_size=3, hidden_size=h, num_layers=2)
    p = init_network(cfg, make_rng(0))
    assert p["rnn.0.fwd.W_ih"].shape == (4 * h, 3)
    assert p["rnn.1.bwd.W_ih"].shape == (4 * h, 2 * h)
    b = p["rnn.1.bwd.b"]
    assert (b[h:2 * h] == 1.0).all()
    assert (np.delete(b, np.s_[h:2 * h]) == 0.0).all()


def test_init_bounds_and_determinism():
    cfg = NetworkConfig(CellKind("GRU", True), input_size=5, hidden_size=16, num_layers=2)
    a = init_network(cfg, make_rng(11))
    assert a.bitwise_equal(init_network(cfg, make_rng(11)))
    assert not a.bitwise_equal(init_network(cfg, make_rng(12)))
    bound = 1 / math.sqrt(16)
    for name, arr in a:
        if ".W" in name:
            assert (np.abs(arr) <= bound).all()
        else:
            assert (arr == 0).all()
    assert a.names == [n for n, _ in param_shapes(cfg)]


def test_canonical_variant():
    assert canonical_variant("bigru") == "GRU"
    assert str(CellKind("lstm", True)) == "BiLSTM"
    assert str(CellKind("SimpleRNN")) == "RNN"
    with pytest.raises(ValueError):
        CellKind("transformer")


def test_config_validation():
    with pytest.raises(ValueError):
        NetworkConfig(CellKind("GRU"), input_size=0, hidden_size=4)
    with pytest.raises(ValueError):
        NetworkConfig(CellKind("GRU"), input_size=3, hidden_size=4, learning_rate=0)


@pytest.mark.parametrize("variant,bi", KINDS)
@pytest.mark.parametrize("layers", [1, 3])
def test_output_shape_and_determinism(variant, bi, layers):
    cfg = tiny_config(variant, bi, layers, T=7)
    p = init_network(cfg, make_rng(0))
    x = make_rng(1).normal(size=(7, 5))
    y1, tape = forward(p, cfg, x)
    y2, _ = forward(p, cfg, x)
    assert y1.shape == (7, 2)
    assert np.array_equal(y1, y2)
    assert tape.head_in.shape == (7, 4 * (2 if bi else 1))


@pytest.mark.parametrize("variant,bi", KINDS)
def test_zero_weights_and_input_give_zero(variant, bi):
    cfg = tiny_config(variant, bi)
    p = init_network(cfg, make_rng(0)).zeros_like()
    y, _ = forward(p, cfg, np.zeros((3, 5)))
    assert (y == 0).all()


def test_scalar_simple_rnn_two_step_recursion():
    cfg = NetworkConfig(CellKind("SimpleRNN"), input_size=1, hidden_size=1, fc_hidden=1,
                        sequence_length=2)
    a, w, b = 0.7, -0.4, 0.1
    u1, c1 = 1.3, -0.2
    v, c2 = np.array([0.5, -2.0]), np.array([0.25, 0.05])
    p = ParameterSet([
        ("rnn.0.fwd.W_ih", np.array([[a]])), ("rnn.0.fwd.W_hh", np.array([[w]])),
        ("rnn.0.fwd.b", np.array([b])),
        ("fc.W1", np.array([[u1]])), ("fc.b1", np.array([c1])),
        ("fc.W2", v.reshape(2, 1)), ("fc.b2", c2),
    ])
    x1, x2 = 0.9, -1.1
    h1 = math.tanh(a * x1 + b)
    h2 = math.tanh(a * x2 + w * h1 + b)
    expected = np.array([v * math.tanh(u1 * h + c1) + c2 for h in (h1, h2)])
    y, _ = forward(p, cfg, np.array([[x1], [x2]]))
    np.testing.assert_allclose(y, expected, rtol=0, atol=1e-12)


@pytest.mark.parametrize("variant", ["SimpleRNN", "GRU", "LSTM"])
def test_palindrome_mirror(variant):
    # tie backward weights to forward ones; on a palindrome the halves swap
    cfg = tiny_config(variant, True, T=6)
    p = init_network(cfg, make_rng(3))
    d = p.as_dict()
    for k in ("W_ih", "W_hh", "b"):
        d[f"rnn.0.bwd.{k}"] = d[f"rnn.0.fwd.{k}"]
    p = ParameterSet([(n, d[n]) for n in p.names])
    half = make_rng(4).normal(size=(3, 5))
    x = np.concatenate([half, half[::-1]])
    _, tape = forward(p, cfg, x)
    u = tape.head_in
    mirrored = np.concatenate([u[::-1, 4:], u[::-1, :4]], axis=1)
    np.testing.assert_allclose(u, mirrored, rtol=0, atol=1e-14)


@pytest.mark.parametrize("variant,bi", KINDS)
def test_backward_linearity_and_zero(variant, bi):
    cfg = tiny_config(variant, bi, 2)
    p = init_network(cfg, make_rng(0))
    x = make_rng(1).normal(size=(3, 5))
    G = make_rng(2).normal(size=(3, 2))
    g1 = backward(p, cfg, forward(p, cfg, x)[1], G)
    g2 = backward(p, cfg, forward(p, cfg, x)[1], 2 * G)
    g0 = backward(p, cfg, forward(p, cfg, x)[1], np.zeros((3, 2)))
    assert g1.layout_id == p.layout_id
    for (_, a), (_, b), (_, z) in zip(g1, g2, g0):
        np.testing.assert_allclose(b, 2 * a, rtol=1e-12, atol=1e-15)
        assert (z == 0).all()


def test_gradient_check_longer_sequence():
    errs = relative_errors("LSTM", True, 2, seed=5, T=8, hidden=3, features=4)
    assert max(errs.values()) < 1e-4, errs


def test_tape_rules():
    cfg = tiny_config("GRU")
    p = init_network(cfg, make_rng(0))
    x = np.ones((3, 5))
    _, tape = forward(p, cfg, x)
    backward(p, cfg, tape, np.ones((3, 2)))
    with pytest.raises(RuntimeError):
        backward(p, cfg, tape, np.ones((3, 2)))
    other = tiny_config("GRU", hidden=5)
    q = init_network(other, make_rng(0))
    _, tape = forward(q, other, x)
    with pytest.raises(LayoutMismatchError):
        backward(p, cfg, tape, np.ones((3, 2)))
    _, tape = forward(p, cfg, x)
    with pytest.raises(ValueError):
        backward(p, cfg, tape, np.ones((2, 2)))
    with pytest.raises(NonFiniteError):
        backward(p, cfg, tape, np.full((3, 2), np.nan))


def test_forward_errors():
    cfg = tiny_config("SimpleRNN")
    p = init_network(cfg, make_rng(0))
    with pytest.raises(ValueError):
        forward(p, cfg, np.ones((3, 4)))
    with pytest.raises(ValueError):
        forward(p, cfg, np.ones((4, 5)))      # longer than sequence_length
    with pytest.raises(ValueError):
        forward(p, cfg, np.ones((0, 5)))
    x = np.ones((3, 5))
    x[1, 2] = np.inf
    with pytest.raises(NonFiniteError):
        forward(p, cfg, x)


def test_short_sequences_allowed():
    cfg = tiny_config("GRU", True, T=10)
    p = init_network(cfg, make_rng(0))
    y, _ = forward(p, cfg, np.ones((4, 5)))
    assert y.shape == (4, 2)


def test_predict_sequence_chunks_with_remainder():
    cfg = tiny_config("LSTM", True, T=4)
    p = init_network(cfg, make_rng(0))
    x = make_rng(1).normal(size=(10, 5))
    y = predict_sequence(p, cfg, x)
    expected = np.concatenate([forward(p, cfg, x[s:s + 4])[0] for s in (0, 4, 8)])
    assert np.array_equal(y, expected)
    assert predict_sequence(p, cfg, np.zeros((0, 5))).shape == (0, 2)
