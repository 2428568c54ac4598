"""Simple RNN, GRU and LSTM sequence regressors with hand-written BPTT.

A network is a stack of recurrent layers (optionally bidirectional)
followed by a per-frame fully connected head::

    x[T, F] -> layer 0 -> ... -> layer L-1 -> tanh(W1 h + b1) -> W2 a + b2 -> y[T, 2]

Gate conventions (rows of the stacked ``W_ih``/``W_hh``/``b``):

* SimpleRNN: ``h = tanh(W_ih x + W_hh h_prev + b)``
* GRU (r, z, n): ``n = tanh(W_in x + b_n + r * (W_hn h_prev))``,
  ``h = (1 - z) * n + z * h_prev``
* LSTM (i, f, g, o): ``c = f * c_prev + i * g``, ``h = o * tanh(c)``
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .params import LayoutMismatchError, ParameterSet
from .tensor import NonFiniteError, uniform_init

VARIANTS = ("SimpleRNN", "GRU", "LSTM")
_ALIASES = {
    "simplernn": "SimpleRNN", "rnn": "SimpleRNN", "elman": "SimpleRNN",
    "gru": "GRU", "bigru": "GRU",
    "lstm": "LSTM", "bilstm": "LSTM",
}
N_GATES = {"SimpleRNN": 1, "GRU": 3, "LSTM": 4}


def canonical_variant(name: str) -> str:
    try:
        return _ALIASES[name.lower()]
    except KeyError:
        raise ValueError(f"unknown cell variant {name!r}; expected one of {VARIANTS}") from None


@dataclass(frozen=True)
class CellKind:
    variant: str
    bidirectional: bool = False

    def __post_init__(self):
        object.__setattr__(self, "variant", canonical_variant(self.variant))

    @property
    def directions(self) -> tuple[str, ...]:
        return ("fwd", "bwd") if self.bidirectional else ("fwd",)

    def __str__(self) -> str:
        prefix = "Bi" if self.bidirectional else ""
        return prefix + ("RNN" if self.variant == "SimpleRNN" else self.variant)


@dataclass(frozen=True)
class NetworkConfig:
    cell: CellKind
    input_size: int
    hidden_size: int
    num_layers: int = 1
    fc_hidden: int = 10
    outputs: int = 2
    sequence_length: int = 600
    learning_rate: float = 1e-4

    def __post_init__(self):
        for name in ("input_size", "hidden_size", "num_layers", "fc_hidden",
                     "outputs", "sequence_length"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")

    @property
    def layer_output_size(self) -> int:
        return self.hidden_size * len(self.cell.directions)


def param_shapes(config: NetworkConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Names and shapes in canonical order: layer, direction, W_ih/W_hh/b, then head."""
    h = config.hidden_size
    g = N_GATES[config.cell.variant] * h
    shapes = []
    for layer in range(config.num_layers):
        d_in = config.input_size if layer == 0 else config.layer_output_size
        for direction in config.cell.directions:
            prefix = f"rnn.{layer}.{direction}."
            shapes += [
                (prefix + "W_ih", (g, d_in)),
                (prefix + "W_hh", (g, h)),
                (prefix + "b", (g,)),
            ]
    shapes += [
        ("fc.W1", (config.fc_hidden, config.layer_output_size)),
        ("fc.b1", (config.fc_hidden,)),
        ("fc.W2", (config.outputs, config.fc_hidden)),
        ("fc.b2", (config.outputs,)),
    ]
    return shapes


def init_network(config: NetworkConfig, rng: np.random.Generator) -> ParameterSet:
    """Uniform(-1/sqrt(hidden), 1/sqrt(hidden)) weights, zero biases.

    LSTM forget-gate biases start at 1.0.
    """
    bound = 1.0 / np.sqrt(config.hidden_size)
    h = config.hidden_size
    entries = []
    for name, shape in param_shapes(config):
        if name.endswith(".b") or name.startswith("fc.b"):
            arr = np.zeros(shape)
            if config.cell.variant == "LSTM" and name.startswith("rnn."):
                arr[h:2 * h] = 1.0
        else:
            arr = uniform_init(rng, shape, -bound, bound)
        entries.append((name, arr))
    return ParameterSet(entries)


def check_params(params: ParameterSet, config: NetworkConfig) -> None:
    expected = param_shapes(config)
    actual = list(zip(params.names, params.shapes))
    if actual != expected:
        raise LayoutMismatchError("parameter set does not match network config")


@dataclass
class _DirTape:
    xs: np.ndarray          # layer input in processing order [T, D]
    hs: np.ndarray          # hidden states incl. h0 [T+1, h]
    gates: np.ndarray       # post-activation gates [T, G*h]
    extra: np.ndarray | None = None   # GRU: W_hn h_prev; LSTM: cell states [T+1, h]


@dataclass
class ForwardTape:
    length: int
    layer_inputs: list[np.ndarray]
    dirs: list[list[_DirTape]]
    head_in: np.ndarray
    head_act: np.ndarray
    layout_id: str
    consumed: bool = field(default=False)


def _run_direction(variant, xs, W_ih, W_hh, b):
    T = xs.shape[0]
    h = W_hh.shape[1]
    P = np.ascontiguousarray(xs @ W_ih.T + b)
    Whh_T = np.ascontiguousarray(W_hh.T)
    hs = np.zeros((T + 1, h))
    if variant == "SimpleRNN":
        _kernels.rnn_forward(P, Whh_T, hs)
        return _DirTape(xs=xs, hs=hs, gates=hs[1:])
    gates = np.empty_like(P)
    if variant == "GRU":
        qns = np.empty((T, h))
        _kernels.gru_forward(P, Whh_T, hs, gates, qns)
        return _DirTape(xs=xs, hs=hs, gates=gates, extra=qns)
    cs = np.zeros((T + 1, h))
    _kernels.lstm_forward(P, Whh_T, hs, cs, gates)
    return _DirTape(xs=xs, hs=hs, gates=gates, extra=cs)


def _backprop_direction(variant, tape: _DirTape, dH, W_ih, W_hh):
    """Return (dW_ih, dW_hh, db, dxs) for one direction; dH in processing order."""
    W_hh = np.ascontiguousarray(W_hh)
    dP = np.empty((dH.shape[0], W_hh.shape[0]))
    if variant == "SimpleRNN":
        _kernels.rnn_backward(dH, tape.hs, W_hh, dP)
        dQ = dP
    elif variant == "GRU":
        dQ = np.empty_like(dP)
        _kernels.gru_backward(dH, tape.hs, tape.gates, tape.extra, W_hh, dP, dQ)
    else:
        _kernels.lstm_backward(dH, tape.extra, tape.gates, W_hh, dP)
        dQ = dP
    dW_ih = dP.T @ tape.xs
    dW_hh = dQ.T @ tape.hs[:-1]
    db = dP.sum(axis=0)
    dxs = dP @ W_ih
    return dW_ih, dW_hh, db, dxs


def forward(params: ParameterSet, config: NetworkConfig, x: np.ndarray):
    """Per-frame predictions ``y_hat[T, outputs]`` and the tape for :func:`backward`.

    Any ``1 <= T <= config.sequence_length`` is accepted so that trailing
    short chunks can be scored at prediction time.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != config.input_size:
        raise ValueError(f"expected input of shape [T, {config.input_size}], got {x.shape}")
    T = x.shape[0]
    if not 1 <= T <= config.sequence_length:
        raise ValueError(f"sequence length {T} outside [1, {config.sequence_length}]")
    if not np.isfinite(x).all():
        raise NonFiniteError("non-finite input")
    p = params.as_dict()
    variant = config.cell.variant
    u = x
    layer_inputs, dirs = [], []
    for layer in range(config.num_layers):
        layer_inputs.append(u)
        tapes, outs = [], []
        for direction in config.cell.directions:
            prefix = f"rnn.{layer}.{direction}."
            xs = u if direction == "fwd" else np.ascontiguousarray(u[::-1])
            tape = _run_direction(variant, xs, p[prefix + "W_ih"], p[prefix + "W_hh"], p[prefix + "b"])
            tapes.append(tape)
            out = tape.hs[1:]
            outs.append(out if direction == "fwd" else out[::-1])
        dirs.append(tapes)
        u = outs[0] if len(outs) == 1 else np.concatenate(outs, axis=1)
    act = np.tanh(u @ p["fc.W1"].T + p["fc.b1"])
    y_hat = act @ p["fc.W2"].T + p["fc.b2"]
    if not np.isfinite(y_hat).all():
        raise NonFiniteError("forward produced non-finite output")
    tape = ForwardTape(length=T, layer_inputs=layer_inputs, dirs=dirs,
                       head_in=u, head_act=act, layout_id=params.layout_id)
    return y_hat, tape


def backward(params: ParameterSet, config: NetworkConfig, tape: ForwardTape,
             grad_y: np.ndarray) -> ParameterSet:
    """Gradient of ``sum(grad_y * y_hat)`` w.r.t. every parameter (BPTT)."""
    if tape.layout_id != params.layout_id:
        raise LayoutMismatchError("tape was produced with a different parameter layout")
    if tape.consumed:
        raise RuntimeError("forward tape already consumed by a backward pass")
    grad_y = np.asarray(grad_y, dtype=np.float64)
    if grad_y.shape != (tape.length, config.outputs):
        raise ValueError(f"grad_y shape {grad_y.shape} != {(tape.length, config.outputs)}")
    if not np.isfinite(grad_y).all():
        raise NonFiniteError("non-finite upstream gradient")
    tape.consumed = True
    p = params.as_dict()
    grads: dict[str, np.ndarray] = {}

    act = tape.head_act
    grads["fc.W2"] = grad_y.T @ act
    grads["fc.b2"] = grad_y.sum(axis=0)
    dz1 = (grad_y @ p["fc.W2"]) * (1.0 - act * act)
    grads["fc.W1"] = dz1.T @ tape.head_in
    grads["fc.b1"] = dz1.sum(axis=0)
    d_out = dz1 @ p["fc.W1"]

    h = config.hidden_size
    variant = config.cell.variant
    for layer in range(config.num_layers - 1, -1, -1):
        d_in = None
        for k, direction in enumerate(config.cell.directions):
            prefix = f"rnn.{layer}.{direction}."
            dH = d_out[:, k * h:(k + 1) * h]
            if direction == "bwd":
                dH = dH[::-1]
            W_ih, W_hh = p[prefix + "W_ih"], p[prefix + "W_hh"]
            dW_ih, dW_hh, db, dxs = _backprop_direction(
                variant, tape.dirs[layer][k], np.ascontiguousarray(dH), W_ih, W_hh)
            grads[prefix + "W_ih"] = dW_ih
            grads[prefix + "W_hh"] = dW_hh
            grads[prefix + "b"] = db
            if direction == "bwd":
                dxs = dxs[::-1]
            d_in = dxs if d_in is None else d_in + dxs
        d_out = d_in

    out = ParameterSet((name, grads[name]) for name in params.names)
    if not out.all_finite():
        raise NonFiniteError("backward produced non-finite gradients")
    return out


def predict_sequence(params: ParameterSet, config: NetworkConfig, x: np.ndarray) -> np.ndarray:
    """Predict every frame of an arbitrary-length sequence, chunk by chunk.

    Chunks have ``sequence_length`` frames (the last one may be shorter) and
    each starts from a zero hidden state, as during training.
    """
    L = config.sequence_length
    out = [forward(params, config, x[s:s + L])[0] for s in range(0, len(x), L)]
    if not out:
        return np.zeros((0, config.outputs))
    return np.concatenate(out, axis=0)
