"""Ordered, named collections of weight tensors."""
from __future__ import annotations

import hashlib
from typing import Callable, Iterable, Iterator

import numpy as np


class LayoutMismatchError(ValueError):
    pass


class ParameterSet:
    """Ordered mapping ``name -> float64 array``.

    Two sets are compatible (aggregable, steppable) iff their ``layout_id``
    matches, i.e. they carry the same names and shapes in the same order.
    """

    __slots__ = ("_entries", "_layout_id")

    def __init__(self, entries: Iterable[tuple[str, np.ndarray]]):
        items = []
        seen = set()
        for name, arr in entries:
            if name in seen:
                raise ValueError(f"duplicate parameter name {name!r}")
            seen.add(name)
            items.append((name, np.ascontiguousarray(arr, dtype=np.float64)))
        self._entries = tuple(items)
        self._layout_id = None

    @property
    def entries(self) -> tuple[tuple[str, np.ndarray], ...]:
        return self._entries

    @property
    def names(self) -> list[str]:
        return [n for n, _ in self._entries]

    @property
    def shapes(self) -> list[tuple[int, ...]]:
        return [a.shape for _, a in self._entries]

    @property
    def layout_id(self) -> str:
        if self._layout_id is None:
            h = hashlib.sha256()
            for name, arr in self._entries:
                h.update(name.encode())
                h.update(repr(arr.shape).encode())
            self._layout_id = h.hexdigest()[:16]
        return self._layout_id

    @property
    def size(self) -> int:
        return sum(a.size for _, a in self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[tuple[str, np.ndarray]]:
        return iter(self._entries)

    def __getitem__(self, name: str) -> np.ndarray:
        for n, a in self._entries:
            if n == name:
                return a
        raise KeyError(name)

    def as_dict(self) -> dict[str, np.ndarray]:
        return dict(self._entries)

    def check_layout(self, other: "ParameterSet") -> None:
        if self.layout_id != other.layout_id:
            raise LayoutMismatchError(
                f"layout {other.layout_id} does not match {self.layout_id}"
            )

    def map(self, fn: Callable[[np.ndarray], np.ndarray]) -> "ParameterSet":
        return ParameterSet((n, fn(a)) for n, a in self._entries)

    def zip_map(self, other: "ParameterSet", fn) -> "ParameterSet":
        self.check_layout(other)
        return ParameterSet(
            (n, fn(a, b)) for (n, a), (_, b) in zip(self._entries, other._entries)
        )

    def copy(self) -> "ParameterSet":
        return self.map(np.copy)

    def zeros_like(self) -> "ParameterSet":
        return self.map(np.zeros_like)

    def flatten(self) -> np.ndarray:
        return np.concatenate([a.ravel() for _, a in self._entries])

    def unflatten(self, vec: np.ndarray) -> "ParameterSet":
        out, pos = [], 0
        for name, arr in self._entries:
            out.append((name, np.asarray(vec[pos:pos + arr.size]).reshape(arr.shape)))
            pos += arr.size
        if pos != len(vec):
            raise ValueError("vector length does not match layout")
        return ParameterSet(out)

    def global_norm(self) -> float:
        return float(np.sqrt(sum(float(np.dot(a.ravel(), a.ravel())) for _, a in self._entries)))

    def all_finite(self) -> bool:
        return all(np.isfinite(a).all() for _, a in self._entries)

    def bitwise_equal(self, other: "ParameterSet") -> bool:
        if self.layout_id != other.layout_id:
            return False
        return all(
            a.tobytes() == b.tobytes()
            for (_, a), (_, b) in zip(self._entries, other._entries)
        )

    def __repr__(self) -> str:
        return f"ParameterSet({len(self)} entries, {self.size} values, layout={self.layout_id})"
