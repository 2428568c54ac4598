"""Acceptance criteria; a PASS/FAIL line per criterion appears in the pytest summary."""
import time
from collections import Counter

import numpy as np
import pytest

from fedseq.config import ExperimentConfig
from fedseq.data import generate_synthetic, plan_folds, window
from fedseq.estimators import FederatedRecurrentRegressor, RecurrentRegressor
from fedseq.federation import (
    AggregationRule,
    FederatedClient,
    FederatedServer,
    ProtocolError,
    RoundMessage,
    SimTransport,
    Tag,
    aggregate,
    decode_message,
    decode_params,
    encode_params,
)
from fedseq.harness import run_cross_validation
from fedseq.metrics import ccc, pearson
from fedseq.nets import CellKind, NetworkConfig, init_network
from fedseq.params import ParameterSet
from fedseq.tensor import make_rng

from _helpers import naive_ccc, naive_pearson, relative_errors


@pytest.mark.criterion("gradient check (3 cells x uni/bi x 1/2 layers, rel err < 1e-4, < 60 s)")
def test_gradient_correctness(criterion):
    start = time.perf_counter()
    worst = {}
    for variant in ("SimpleRNN", "GRU", "LSTM"):
        for bi in (False, True):
            for layers in (1, 2):
                errs = relative_errors(variant, bi, layers)
                worst[f"{'Bi' if bi else ''}{variant}x{layers}"] = max(errs.values())
    elapsed = time.perf_counter() - start
    top = max(worst, key=worst.get)
    criterion.note(f"max rel err {worst[top]:.2e} ({top}) over 12 networks, {elapsed:.1f} s")
    assert all(e < 1e-4 for e in worst.values()), worst
    assert elapsed < 60


@pytest.mark.criterion("CCC oracle (1000 pairs to 1e-12, identities, 8/13, |CCC|<=|Pearson|)")
def test_ccc_oracle(criterion):
    rng = make_rng(2024)
    worst_ccc = worst_pearson = 0.0
    for _ in range(1000):
        n = int(rng.integers(2, 200))
        x = rng.normal(rng.uniform(-2, 2), rng.uniform(0.1, 3), size=n)
        y = rng.uniform(-1, 1) * x + rng.normal(rng.uniform(-2, 2), rng.uniform(0.1, 3), size=n)
        c, r = ccc(x, y), pearson(x, y)
        worst_ccc = max(worst_ccc, abs(c - naive_ccc(list(x), list(y))))
        worst_pearson = max(worst_pearson, abs(r - naive_pearson(list(x), list(y))))
        assert abs(c) <= abs(r) + 1e-12
    x = rng.normal(size=500)
    assert ccc(x, x) == 1.0
    # reversed ordering keeps mean and variance; symmetric values give rho = -1
    sym = np.linspace(-1, 1, 101)
    assert abs(ccc(sym, sym[::-1]) + 1.0) < 1e-12
    assert ccc([1, 2, 3], [3, 2, 1]) == -1.0
    assert abs(ccc([0, 1, 2], [0, 2, 4]) - 8 / 13) < 1e-12
    criterion.note(f"max |ccc - oracle| {worst_ccc:.1e}, max |pearson - oracle| {worst_pearson:.1e}")
    assert worst_ccc < 1e-12 and worst_pearson < 1e-12


@pytest.mark.criterion("single-client federated == centralized (bitwise weights, CCC to 1e-12, < 120 s)")
def test_single_client_equivalence(criterion):
    start = time.perf_counter()
    seq = generate_synthetic(1, 1200, seed=5)
    kw = dict(hidden_size=16, sequence_length=200, random_state=3)
    central = RecurrentRegressor(epochs=5, **kw).fit(seq)
    fed = FederatedRecurrentRegressor(epochs=5, epochs_per_round=1, **kw).fit(seq)
    assert fed.rounds_ == 5
    same = central.params_.bitwise_equal(fed.params_)
    base = dict(input_size=40, hidden_size=16, sequence_length=200, epochs=5, k_folds=2,
                synthetic_participants=2, synthetic_frames=1200, synthetic_seed=5, seed=3)
    c_run, _ = run_cross_validation(ExperimentConfig(mode="central", **base))
    f_run, _ = run_cross_validation(ExperimentConfig(mode="federated", **base))
    gap = max(abs(getattr(a.metrics, k) - getattr(b.metrics, k))
              for a, b in zip(c_run.folds, f_run.folds)
              for k in ("valence_ccc", "arousal_ccc"))
    elapsed = time.perf_counter() - start
    criterion.note(f"weights bitwise equal: {same}; max CCC gap {gap:.1e}; {elapsed:.1f} s")
    assert same and gap <= 1e-12 and elapsed < 120


@pytest.mark.criterion("identical clients fixed point (4 clones == solo, bitwise every round)")
def test_identical_clients(criterion):
    cfg = NetworkConfig(CellKind("GRU", True), input_size=40, hidden_size=16,
                        sequence_length=200)
    seq = generate_synthetic(1, 800, seed=9)[0]
    wins = window(seq, 200)
    init = init_network(cfg, make_rng(1))
    rounds = 4
    clients = [FederatedClient(f"c{i}", cfg, wins) for i in range(4)]
    server = FederatedServer(init, [c.client_id for c in clients], rounds)
    with SimTransport(clients) as transport:
        server.run(transport)
    solo = FederatedClient("solo", cfg, wins)
    params, equal = init, []
    for r in range(rounds):
        params, _ = solo.local_train(params)
        equal.append(server.history[r].bitwise_equal(params))
    criterion.note(f"per-round bitwise equality {equal}")
    assert all(equal)


@pytest.mark.criterion("aggregation oracle (naive average to 1e-12, permutation invariant)")
def test_aggregation_oracle(criterion):
    rng = make_rng(77)
    cfg = NetworkConfig(CellKind("LSTM", True), input_size=6, hidden_size=5, num_layers=2)
    ups = {f"client{i}": (init_network(cfg, rng).map(lambda a: a + rng.normal(size=a.shape)),
                          int(rng.integers(1, 100))) for i in range(6)}
    worst, perm_ok = 0.0, True
    for rule in AggregationRule:
        out = aggregate(ups, rule)
        w = {k: (1.0 if rule is AggregationRule.MEAN else float(n)) for k, (_, n) in ups.items()}
        for name, arr in out:
            flat = arr.ravel()
            for i in range(flat.size):
                naive = sum(w[k] * p[name].ravel()[i] for k, (p, _) in ups.items()) / sum(w.values())
                worst = max(worst, abs(flat[i] - naive))
        for seed in range(10):
            order = make_rng(seed).permutation(list(ups))
            perm_ok &= aggregate({k: ups[k] for k in order}, rule).bitwise_equal(out)
            perm_ok &= aggregate([ups[k] for k in order], rule).bitwise_equal(
                aggregate(list(ups.values()), rule))
    criterion.note(f"max deviation {worst:.1e}; permutation invariant: {perm_ok}")
    assert worst < 1e-12 and perm_ok


@pytest.mark.slow
@pytest.mark.criterion("learnability (central BiGRU 2-fold CCC >= 0.8; federated 7 clients CCC >= 0.7)")
def test_learnability(criterion):
    start = time.perf_counter()
    base = dict(cell="GRU", bidirectional=True, hidden_size=64, learning_rate=1e-4,
                sequence_length=600, epochs=100, synthetic_participants=8,
                synthetic_frames=3000, synthetic_seed=7, seed=0)
    central, _ = run_cross_validation(ExperimentConfig(mode="central", k_folds=2, **base))
    t_central = time.perf_counter() - start
    # leave-one-participant-out: every fold federates the other 7 participants
    fed, _ = run_cross_validation(ExperimentConfig(mode="federated", k_folds=8, **base))
    elapsed = time.perf_counter() - start
    assert all(f.n_clients == 7 for f in fed.folds)
    criterion.note(f"central valence {central.mean_valence_ccc:.3f} arousal "
                   f"{central.mean_arousal_ccc:.3f} ({t_central / 60:.1f} min)")
    criterion.note(f"federated valence {fed.mean_valence_ccc:.3f} arousal "
                   f"{fed.mean_arousal_ccc:.3f}; total {elapsed / 60:.1f} min")
    assert central.mean_valence_ccc >= 0.8 and central.mean_arousal_ccc >= 0.8
    assert fed.mean_valence_ccc >= 0.7 and fed.mean_arousal_ccc >= 0.7
    assert elapsed < 30 * 60


@pytest.mark.criterion("fold plan (23 participants, k=8: disjoint cover of sizes 2-3; no overlap per run)")
def test_fold_plan(criterion):
    ids = [f"P{i:02d}" for i in range(1, 24)]
    sizes = set()
    for seed in range(50):
        plan = plan_folds(ids, 8, make_rng(seed))
        members = [p for f in plan.folds for p in f]
        assert sorted(members) == ids and len(members) == len(set(members))
        sizes |= {len(f) for f in plan.folds}
        assert Counter(len(f) for f in plan.folds) == {3: 7, 2: 1}
    cfg = ExperimentConfig(input_size=8, hidden_size=4, sequence_length=20, epochs=1,
                           k_folds=8, synthetic_participants=23, synthetic_frames=40)
    run, _ = run_cross_validation(cfg)
    held = [p for f in run.folds for p in f.eval_participants]
    overlap = [f.fold for f in run.folds if set(f.train_participants) & set(f.eval_participants)]
    criterion.note(f"fold sizes seen {sorted(sizes)}; run folds "
                   f"{[len(f.eval_participants) for f in run.folds]}; overlapping folds {overlap}")
    assert sorted(held) == sorted(f"P{i:02d}" for i in range(1, 24))
    assert sizes == {2, 3} and not overlap


@pytest.mark.criterion("wire round-trip (bitwise ParameterSet/RoundMessage, NaN refused, bad magic refused)")
def test_wire_round_trip(criterion):
    cfg = NetworkConfig(CellKind("LSTM", True), input_size=40, hidden_size=8, num_layers=2)
    params = init_network(cfg, make_rng(0)).map(lambda a: a * np.pi)
    ok = decode_params(encode_params(params)).bitwise_equal(params)
    msgs = [RoundMessage(Tag.REGISTER, 0, "P07"), RoundMessage(Tag.GLOBAL, 12, payload=params),
            RoundMessage(Tag.UPDATE, 12, "P07", params, 5), RoundMessage(Tag.DONE, 13)]
    for m in msgs:
        back = decode_message(m.encode())
        ok &= back.encode() == m.encode()
        ok &= (back.tag, back.round, back.client_id, back.n_samples) == (
            m.tag, m.round, m.client_id, m.n_samples)
        if m.payload is not None:
            ok &= back.payload.bitwise_equal(m.payload)
    poisoned = ParameterSet([(n, a.copy()) for n, a in params])
    poisoned["fc.b2"][0] = np.nan
    with pytest.raises(ProtocolError):
        encode_params(poisoned)
    frame = bytearray(msgs[2].encode())
    frame[-8:] = np.array([np.inf]).tobytes()
    with pytest.raises(ProtocolError):
        decode_message(bytes(frame))
    corrupt = bytearray(msgs[1].encode())
    corrupt[0] ^= 0xFF
    with pytest.raises(ProtocolError, match="magic"):
        decode_message(bytes(corrupt))
    criterion.note(f"round trips bitwise: {ok}; NaN/Inf and corrupted magic raise ProtocolError")
    assert ok


@pytest.mark.criterion("full-run determinism (same config and seed: per-fold CCC bitwise, both modes)")
def test_full_run_determinism(criterion):
    base = dict(input_size=40, hidden_size=8, sequence_length=100, epochs=3, k_folds=3,
                synthetic_participants=6, synthetic_frames=300, synthetic_seed=1, seed=42)
    same = {}
    for mode in ("central", "federated"):
        cfg = ExperimentConfig(mode=mode, **base)
        a, _ = run_cross_validation(cfg)
        b, _ = run_cross_validation(ExperimentConfig.from_dict(a.config))
        same[mode] = all(
            x.metrics.valence_ccc == y.metrics.valence_ccc
            and x.metrics.arousal_ccc == y.metrics.arousal_ccc
            for x, y in zip(a.folds, b.folds))
    criterion.note(f"bitwise repeat: {same}")
    assert all(same.values())
