"""Shared test utilities (finite differences, tiny networks)."""
import numpy as np

from fedseq.nets import CellKind, NetworkConfig, backward, forward, init_network
from fedseq.tensor import make_rng

EPS = 1e-5


def tiny_config(variant, bidirectional=False, num_layers=1, hidden=4, features=5, T=3):
    return NetworkConfig(CellKind(variant, bidirectional), input_size=features,
                         hidden_size=hidden, num_layers=num_layers, sequence_length=T)


def relative_errors(variant, bidirectional, num_layers, seed=0, T=3, hidden=4, features=5):
    """Analytic vs central-difference gradient of ``sum(G * y_hat)`` per parameter.

    Returns ``{name: max relative error}`` with the symmetric relative metric
    ``|ga - gfd| / max(1e-8, |ga| + |gfd|)``.
    """
    cfg = tiny_config(variant, bidirectional, num_layers, hidden, features, T)
    rng = make_rng(seed)
    params = init_network(cfg, rng)
    # shift every entry off its init so biases/gates are exercised away from zero
    params = params.map(lambda a: a + 0.3 * rng.normal(size=a.shape))
    x = rng.normal(size=(T, features))
    G = rng.normal(size=(T, 2))

    def objective(p):
        return float(np.sum(G * forward(p, cfg, x)[0]))

    _, tape = forward(params, cfg, x)
    analytic = backward(params, cfg, tape, G)
    flat = params.flatten()
    fd = np.empty_like(flat)
    for i in range(flat.size):
        up, down = flat.copy(), flat.copy()
        up[i] += EPS
        down[i] -= EPS
        fd[i] = (objective(params.unflatten(up)) - objective(params.unflatten(down))) / (2 * EPS)
    ga = analytic.flatten()
    rel = np.abs(ga - fd) / np.maximum(1e-8, np.abs(ga) + np.abs(fd))
    out, start = {}, 0
    for name, arr in params:
        out[name] = float(rel[start:start + arr.size].max())
        start += arr.size
    return out


def naive_ccc(x, y):
    n = len(x)
    mx = sum(x) / n
    my = sum(y) / n
    vx = sum((a - mx) ** 2 for a in x) / n
    vy = sum((b - my) ** 2 for b in y) / n
    cov = sum((a - mx) * (b - my) for a, b in zip(x, y)) / n
    return 2 * cov / (vx + vy + (mx - my) ** 2)


def naive_pearson(x, y):
    n = len(x)
    mx = sum(x) / n
    my = sum(y) / n
    cov = sum((a - mx) * (b - my) for a, b in zip(x, y))
    sx = sum((a - mx) ** 2 for a in x) ** 0.5
    sy = sum((b - my) ** 2 for b in y) ** 0.5
    return cov / (sx * sy)
