"""Flat parameter vectors with a named layout mapping offsets to arrays."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError


@dataclass(frozen=True)
class LayoutEntry:
    """One contiguous slice of the flat vector: a weight matrix or bias."""

    name: str
    shape: tuple[int, ...]
    offset: int

    @property
    def size(self) -> int:
        return int(np.prod(self.shape, dtype=np.int64))


class ParameterLayout:
    """Ordered list of (name, shape) descriptors over a flat float64 vector."""

    def __init__(self, entries: list[tuple[str, tuple[int, ...]]]):
        self.entries: list[LayoutEntry] = []
        offset = 0
        for name, shape in entries:
            entry = LayoutEntry(name, tuple(int(s) for s in shape), offset)
            self.entries.append(entry)
            offset += entry.size
        self.size = offset

    def __len__(self) -> int:
        return len(self.entries)

    def __eq__(self, other) -> bool:
        return isinstance(other, ParameterLayout) and [
            (e.name, e.shape) for e in self.entries
        ] == [(e.name, e.shape) for e in other.entries]

    def unflatten(self, data: np.ndarray) -> list[np.ndarray]:
        """Views into data, one per entry, reshaped to the entry shapes."""
        if data.shape[-1] != self.size:
            raise DimensionError(
                f"flat vector has length {data.shape[-1]}, layout expects {self.size}"
            )
        # Leading axes (if any) are preserved, so stacked candidate vectors
        # unflatten to stacked weight arrays.
        lead = data.shape[:-1]
        return [
            data[..., e.offset : e.offset + e.size].reshape(lead + e.shape)
            for e in self.entries
        ]

    def flatten(self, arrays: list[np.ndarray]) -> np.ndarray:
        if len(arrays) != len(self.entries):
            raise DimensionError(
                f"layout has {len(self.entries)} entries, got {len(arrays)} arrays"
            )
        parts = []
        for arr, e in zip(arrays, self.entries):
            a = np.asarray(arr, dtype=np.float64)
            if a.shape != e.shape:
                raise DimensionError(
                    f"entry {e.name}: expected shape {e.shape}, got {a.shape}"
                )
            parts.append(a.reshape(-1))
        return np.concatenate(parts) if parts else np.zeros(0)


class ParameterVector:
    """A float64[n] vector plus the layout that maps it to weight arrays."""

    __slots__ = ("data", "layout")

    def __init__(self, data: np.ndarray, layout: ParameterLayout):
        data = np.asarray(data, dtype=np.float64)
        if data.ndim != 1:
            raise DimensionError(f"parameter data must be 1-d, got shape {data.shape}")
        if data.shape[0] != layout.size:
            raise DimensionError(
                f"parameter data has length {data.shape[0]}, layout expects {layout.size}"
            )
        self.data = data
        self.layout = layout

    @property
    def n(self) -> int:
        return self.data.shape[0]

    def arrays(self) -> list[np.ndarray]:
        return self.layout.unflatten(self.data)

    @classmethod
    def from_arrays(cls, arrays: list[np.ndarray], layout: ParameterLayout) -> "ParameterVector":
        return cls(layout.flatten(arrays), layout)

    def zeros_like(self) -> "ParameterVector":
        return ParameterVector(np.zeros_like(self.data), self.layout)

    def copy(self) -> "ParameterVector":
        return ParameterVector(self.data.copy(), self.layout)

    def __add__(self, other: "ParameterVector") -> "ParameterVector":
        return ParameterVector(self.data + other.data, self.layout)

    def __sub__(self, other: "ParameterVector") -> "ParameterVector":
        return ParameterVector(self.data - other.data, self.layout)

    def __mul__(self, scalar: float) -> "ParameterVector":
        return ParameterVector(self.data * float(scalar), self.layout)

    __rmul__ = __mul__

    def norm(self) -> float:
        return float(np.linalg.norm(self.data))

    def __repr__(self) -> str:
        return f"ParameterVector(n={self.n}, entries={len(self.layout)})"
