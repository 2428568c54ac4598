"""Input checks for the estimator API.

Estimators take a *collection of sequences*: a list of ``[N_i, F]`` arrays
(one per participant), a single ``[N, F]`` array, or a list of
:class:`~fedseq.data.FeatureSequence`. Targets mirror that with ``[N_i, 2]``.
"""
from __future__ import annotations

import numpy as np
from sklearn.utils import check_array

from .data import FeatureSequence


def _is_single(X) -> bool:
    return isinstance(X, np.ndarray) and X.ndim == 2


def check_sequences(X, y=None, n_features: int | None = None, n_outputs: int = 2):
    """Return ``(xs, ys, single)`` as lists of float64 arrays.

    ``single`` records whether the caller passed one bare array, so
    predictions can be returned in the same form. When ``X`` holds
    FeatureSequence objects and ``y`` is None, labels come from them.
    """
    single = _is_single(X)
    seqs = [X] if single else list(X)
    if not seqs:
        raise ValueError("empty collection of sequences")
    if y is None and all(isinstance(s, FeatureSequence) for s in seqs):
        y = [s.labels for s in seqs]
    xs = [check_array(s.frames if isinstance(s, FeatureSequence) else s,
                      dtype=np.float64, order="C") for s in seqs]
    widths = {x.shape[1] for x in xs}
    if len(widths) != 1:
        raise ValueError(f"sequences have different feature widths: {sorted(widths)}")
    if n_features is not None and widths != {n_features}:
        raise ValueError(f"expected {n_features} features, got {widths.pop()}")
    if y is None:
        return xs, None, single
    ys_in = [y] if _is_single(y) and single else list(y)
    if len(ys_in) != len(xs):
        raise ValueError(f"{len(xs)} feature sequences but {len(ys_in)} label sequences")
    ys = [check_array(t, dtype=np.float64, order="C") for t in ys_in]
    for x, t in zip(xs, ys):
        if t.shape != (len(x), n_outputs):
            raise ValueError(f"labels of shape {t.shape} do not match {len(x)} frames x {n_outputs}")
    return xs, ys, single


def check_sequence_ids(ids, n: int) -> list[str]:
    if ids is None:
        return [f"client{i:03d}" for i in range(n)]
    ids = [str(i) for i in ids]
    if len(ids) != n or len(set(ids)) != n:
        raise ValueError("need one unique id per sequence")
    return ids
