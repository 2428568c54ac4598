from __future__ import annotations

import enum
import hashlib
from collections.abc import Mapping

from ..params import ParameterSet


class AggregationRule(str, enum.Enum):
    MEAN = "mean"
    WEIGHTED_MEAN = "weighted_mean"


def _digest(params: ParameterSet) -> bytes:
    h = hashlib.sha256()
    for name, arr in params:
        h.update(name.encode())
        h.update(arr.tobytes())
    return h.digest()


def aggregate(updates, rule=AggregationRule.MEAN) -> ParameterSet:
    """Element-wise (optionally sample-weighted) mean of client parameter sets.

    ``updates`` is either a mapping ``client_id -> (params, n_samples)`` or a
    sequence of ``(params, n_samples)``. Updates are folded in a canonical
    order (sorted client id, else content digest) with a running mean
    ``m += w / W * (x - m)``, so the result is independent of arrival order
    and identical inputs reproduce themselves bit for bit.
    """
    rule = AggregationRule(rule)
    if isinstance(updates, Mapping):
        ordered = [updates[k] for k in sorted(updates)]
    else:
        ordered = sorted(updates, key=lambda u: _digest(u[0]))
    if not ordered:
        raise ValueError("no updates to aggregate")
    first = ordered[0][0]
    for params, n in ordered:
        first.check_layout(params)
        if rule is AggregationRule.WEIGHTED_MEAN and not n > 0:
            raise ValueError(f"weighted aggregation needs positive sample counts, got {n}")

    acc = [a.copy() for _, a in first]
    total = 1.0 if rule is AggregationRule.MEAN else float(ordered[0][1])
    for params, n in ordered[1:]:
        w = 1.0 if rule is AggregationRule.MEAN else float(n)
        total += w
        frac = w / total
        for m, (_, x) in zip(acc, params):
            m += frac * (x - m)
    return ParameterSet(zip(first.names, acc))
