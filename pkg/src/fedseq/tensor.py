"""Dense float64 array helpers and the seeded random generator.

Tensors are plain C-contiguous ``numpy.ndarray`` objects of dtype float64.
The helpers here add the shape and finiteness checks the rest of the
package relies on; hot loops in :mod:`fedseq.nets` call numpy directly.
"""
from __future__ import annotations

import numpy as np
from scipy.special import expit

DTYPE = np.float64


class NonFiniteError(FloatingPointError):
    """An operation produced or received NaN/Inf."""


def as_tensor(data, shape=None) -> np.ndarray:
    arr = np.ascontiguousarray(data, dtype=DTYPE)
    if shape is not None:
        arr = arr.reshape(shape)
    if any(d <= 0 for d in arr.shape):
        raise ValueError(f"tensor dimensions must be positive, got {arr.shape}")
    _check_finite(arr, "as_tensor")
    return arr


def _check_finite(arr: np.ndarray, where: str) -> np.ndarray:
    if not np.isfinite(arr).all():
        raise NonFiniteError(f"{where}: non-finite values")
    return arr


def make_rng(seed: int) -> np.random.Generator:
    """Return a PCG64 generator; the bit stream depends only on ``seed``."""
    if seed < 0 or seed >= 2**64:
        raise ValueError("seed must fit in an unsigned 64-bit integer")
    return np.random.Generator(np.random.PCG64(seed))


def spawn_seeds(seed: int, n: int) -> list[int]:
    """Derive ``n`` independent 64-bit seeds from ``seed``."""
    ss = np.random.SeedSequence(seed)
    return [int(s.generate_state(1, dtype=np.uint64)[0]) for s in ss.spawn(n)]


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError("matmul expects 2-D tensors")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"inner dimensions differ: {a.shape} x {b.shape}")
    with np.errstate(over="ignore", invalid="ignore"):
        out = a @ b
    return _check_finite(out, "matmul")


_UNARY = {
    "tanh": np.tanh,
    "sigmoid": expit,
    "relu": lambda x: np.maximum(x, 0.0),
}
_BINARY = {
    "add": np.add,
    "sub": np.subtract,
    "mul": np.multiply,
}


def elementwise(op: str, *args, factor: float | None = None) -> np.ndarray:
    """Pointwise ``op`` over exact-shape arguments (no broadcasting).

    ``scale`` multiplies its single argument by ``factor``.
    """
    with np.errstate(over="ignore", invalid="ignore"):
        if op in _UNARY:
            (x,) = args
            out = _UNARY[op](x)
        elif op in _BINARY:
            a, b = args
            if a.shape != b.shape:
                raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
            out = _BINARY[op](a, b)
        elif op == "scale":
            (x,) = args
            if factor is None:
                raise ValueError("scale requires factor")
            out = x * float(factor)
        else:
            raise ValueError(f"unknown elementwise op {op!r}")
    return _check_finite(np.asarray(out, dtype=DTYPE), op)


def uniform_init(rng: np.random.Generator, shape, lo: float, hi: float) -> np.ndarray:
    """I.i.d. samples in ``[lo, hi)``."""
    if not lo < hi:
        raise ValueError(f"need lo < hi, got [{lo}, {hi})")
    out = lo + (hi - lo) * rng.random(shape)
    # lo + (hi-lo)*u can round up to hi for u close to 1
    return np.minimum(out, np.nextafter(hi, lo))
