"""Pearson correlation and the concordance correlation coefficient (CCC).

Both use population moments (divide by N)::

    ccc = 2 cov(x, y) / (var(x) + var(y) + (mean(x) - mean(y))**2)

which equals ``2 rho sx sy / (sx^2 + sy^2 + (mx - my)^2)``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np


class DegenerateInputError(ValueError):
    """Correlation is undefined for the given series."""


def _moments(x, y):
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 2:
        raise DegenerateInputError("need at least two observations")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise ValueError("non-finite values in series")
    mx, my = x.mean(), y.mean()
    dx, dy = x - mx, y - my
    n = x.size
    return mx, my, float(np.dot(dx, dx)) / n, float(np.dot(dy, dy)) / n, float(np.dot(dx, dy)) / n


def pearson(x, y) -> float:
    _, _, vx, vy, cov = _moments(x, y)
    if vx == 0.0 or vy == 0.0:
        raise DegenerateInputError("pearson correlation undefined for a constant series")
    return float(np.clip(cov / np.sqrt(vx * vy), -1.0, 1.0))


def ccc(x, y) -> float:
    mx, my, vx, vy, cov = _moments(x, y)
    denom = vx + vy + (mx - my) ** 2
    if denom == 0.0:
        raise DegenerateInputError("CCC undefined: both series constant and equal")
    return float(np.clip(2.0 * cov / denom, -1.0, 1.0))


@dataclass(frozen=True)
class MetricReport:
    valence_ccc: float
    arousal_ccc: float
    valence_pearson: float
    arousal_pearson: float
    n_frames: int

    def __post_init__(self):
        if self.n_frames < 2:
            raise ValueError("a metric report needs at least two frames")
        for name in ("valence_ccc", "arousal_ccc", "valence_pearson", "arousal_pearson"):
            value = getattr(self, name)
            if not -1.0 <= value <= 1.0:
                raise ValueError(f"{name}={value} outside [-1, 1]")

    def as_dict(self) -> dict:
        return asdict(self)


def _safe(fn, a, b) -> float:
    try:
        return fn(a, b)
    except DegenerateInputError:
        return 0.0


def evaluate_predictions(y_pred, y_true, mode: str = "pooled", groups=None) -> MetricReport:
    """Score ``[N, 2]`` predictions against labels (columns: valence, arousal).

    ``mode="pooled"`` computes each metric over all frames at once;
    ``mode="per_participant"`` averages the metric over ``groups`` (a list of
    per-participant frame counts, in order). Degenerate series (a constant
    prediction) score 0.
    """
    y_pred = np.asarray(y_pred, dtype=np.float64)
    y_true = np.asarray(y_true, dtype=np.float64)
    if y_pred.shape != y_true.shape or y_pred.ndim != 2 or y_pred.shape[1] != 2:
        raise ValueError("expected matching [N, 2] arrays")
    if mode == "pooled":
        spans = [(0, len(y_true))]
    elif mode == "per_participant":
        if groups is None or sum(groups) != len(y_true):
            raise ValueError("per_participant mode needs frame counts summing to N")
        bounds = np.cumsum([0, *groups])
        spans = list(zip(bounds[:-1], bounds[1:]))
    else:
        raise ValueError(f"unknown CCC mode {mode!r}")
    vals = []
    for dim in (0, 1):
        c = [_safe(ccc, y_pred[a:b, dim], y_true[a:b, dim]) for a, b in spans]
        p = [_safe(pearson, y_pred[a:b, dim], y_true[a:b, dim]) for a, b in spans]
        vals.append((float(np.mean(c)), float(np.mean(p))))
    return MetricReport(
        valence_ccc=vals[0][0], arousal_ccc=vals[1][0],
        valence_pearson=vals[0][1], arousal_pearson=vals[1][1],
        n_frames=len(y_true),
    )
