"""The recovered vector of unique outcome functions on a rank grid."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

__all__ = ["MonotonePath"]


@dataclass
class MonotonePath:
    """Unique outcomes ``q(eta)`` tabulated on an increasing grid.

    Rows of ``values`` that could not be identified (set identification)
    are NaN.
    """

    grid: np.ndarray
    values: np.ndarray
    labels: list
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.size, len(self.labels)):
            raise ValueError("values must be (len(grid), N_Q)")

    @property
    def n_q(self) -> int:
        return self.values.shape[1]

    @property
    def identified(self) -> np.ndarray:
        """Mask of grid rows with a finite value."""
        return np.all(np.isfinite(self.values), axis=1)

    @property
    def complete(self) -> bool:
        return bool(self.identified.all())

    def column(self, d: int, k: int) -> np.ndarray:
        return self.values[:, self.labels.index((d, k))]

    def is_monotone(self) -> bool:
        """Componentwise strict increase over every identified stretch."""
        ok = self.identified
        both = ok[1:] & ok[:-1]
        steps = np.diff(self.values, axis=0)[both]
        return bool(np.all(steps > 0))

    def sup_distance(self, other: "MonotonePath") -> float:
        """Sup-norm gap over rows identified in both paths (same grid)."""
        if other.grid.shape != self.grid.shape or not np.allclose(other.grid, self.grid):
            raise ValueError("paths live on different grids")
        both = self.identified & other.identified
        if not both.any():
            return float("nan")
        return float(np.max(np.abs(self.values[both] - other.values[both])))

    def column_names(self) -> list:
        return [f"q_{d}_{k}" for d, k in self.labels]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("#schema=semiiv.path/1\n")
            writer = csv.writer(fh)
            writer.writerow(["eta"] + self.column_names())
            for eta, row in zip(self.grid, self.values):
                writer.writerow([repr(float(eta))] + [repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path) -> "MonotonePath":
        with open(path, newline="") as fh:
            lines = [ln for ln in fh if not ln.startswith("#")]
        reader = csv.reader(lines)
        header = next(reader)
        labels = []
        for name in header[1:]:
            _, d, k = name.split("_")
            labels.append((int(d), int(k)))
        data = np.array([[float(v) for v in row] for row in reader])
        return cls(data[:, 0], data[:, 1:], labels, {"source": str(path)})
