"""Joint densities ``f_{D,Y|z}(d, y)``, cell probabilities and supports.

Two providers share one interface: :class:`AnalyticDensity` derives every
quantity from a :class:`~semiiv.dgp.DgpSpec`, :class:`EmpiricalDensity`
estimates them from a :class:`~semiiv.dgp.Dataset` with per-cell Gaussian
kernels.
"""

from __future__ import annotations

import csv
import warnings
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from itertools import product

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.signal import fftconvolve

from .dgp import Dataset, DgpSpec
from .exceptions import DataError, DataInsufficiencyError, SpecificationError
from .exclusion import ExclusionMap

__all__ = [
    "DensityProvider",
    "AnalyticDensity",
    "EmpiricalDensity",
    "BandwidthPolicy",
    "SupportBounds",
    "analytic_density",
    "empirical_density",
    "support_bounds",
    "silverman_bandwidth",
    "export_density_lattice",
    "DENSITY_FLOOR",
    "TAIL_QUANTILE",
]

DENSITY_FLOOR = 1e-8
TAIL_QUANTILE = 1e-3
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(48)
_KDE_BINS = 4096
_EDGE_SLACK = 1e-12


class DensityProvider(ABC):
    """Observable joint law of ``(D, Y)`` given ``Z = z``.

    ``d`` and ``z`` are 1-based labels; all methods broadcast over arrays.
    """

    mode = "abstract"

    def __init__(self, emap: ExclusionMap):
        self.emap = emap

    @abstractmethod
    def joint_density(self, d, y, z):
        """Density of ``(D = d, Y = y)`` given ``Z = z``."""

    @abstractmethod
    def joint_cdf(self, d, y, z):
        """``Pr(D = d, Y <= y | Z = z)``."""

    @abstractmethod
    def cell_probability(self, d, z) -> float:
        """``Pr(D = d | Z = z)``."""

    @abstractmethod
    def support(self, d: int, k: int) -> tuple:
        """``(q(0), q(1))`` of unique outcome ``(d, k)``."""

    def cell_support(self, d: int, z: int) -> tuple:
        return self.support(d, self.emap.spec.label(d, z))

    @property
    def z_marginal(self) -> np.ndarray:
        """Distribution of the semi-IV (population or sample frequencies)."""
        return np.full(self.emap.n_z, 1.0 / self.emap.n_z)

    def _cells(self, d, y, z):
        d, y, z = np.broadcast_arrays(
            np.asarray(d, dtype=np.int64), np.asarray(y, dtype=float), np.asarray(z, dtype=np.int64)
        )
        J, nz = self.emap.num_alternatives, self.emap.n_z
        if d.size and (d.min() < 1 or d.max() > J or z.min() < 1 or z.max() > nz):
            raise SpecificationError(f"cell labels must satisfy 1 <= d <= {J}, 1 <= z <= {nz}")
        return d, y, z


class AnalyticDensity(DensityProvider):
    """Exact density implied by a DGP: ``p(d | eta(y), z) * eta'(y)``."""

    mode = "analytic"

    def __init__(self, dgp: DgpSpec):
        super().__init__(dgp.exclusion_map)
        self.dgp = dgp

    def _p(self, eta, d, z):
        return self.dgp.selection_probs(eta)[..., z - 1, d - 1]

    @property
    def z_marginal(self) -> np.ndarray:
        return self.dgp.z_marginal

    def joint_density(self, d, y, z):
        d, y, z = self._cells(d, y, z)
        out = np.zeros(y.shape)
        for dd, zz in product(range(1, self.emap.num_alternatives + 1), range(1, self.emap.n_z + 1)):
            mask = (d == dd) & (z == zz)
            if not mask.any():
                continue
            q = self.dgp.outcome(dd, zz)
            yy = y[mask]
            eta = q.inverse(yy)
            # a few ulps of slack so that the support endpoints count as inside
            inside = (eta >= -_EDGE_SLACK) & (eta <= 1 + _EDGE_SLACK)
            vals = np.zeros(yy.shape)
            e = np.clip(eta[inside], 0.0, 1.0)
            vals[inside] = self._p(e, dd, zz) / q.derivative(e)
            out[mask] = vals
        return out

    def _integrated_p(self, upper, d, z):
        upper = np.clip(np.asarray(upper, dtype=float), 0.0, 1.0)
        t = 0.5 * upper[..., None] * (_GL_NODES + 1.0)
        return 0.5 * upper * np.sum(_GL_WEIGHTS * self._p(t, d, z), axis=-1)

    def joint_cdf(self, d, y, z):
        d, y, z = self._cells(d, y, z)
        out = np.zeros(y.shape)
        for dd, zz in product(range(1, self.emap.num_alternatives + 1), range(1, self.emap.n_z + 1)):
            mask = (d == dd) & (z == zz)
            if mask.any():
                out[mask] = self._integrated_p(self.dgp.outcome(dd, zz).inverse(y[mask]), dd, zz)
        return out

    def cell_probability(self, d, z) -> float:
        return float(self._integrated_p(1.0, d, z))

    def support(self, d: int, k: int) -> tuple:
        return self.dgp.outcomes[self.emap.column_index[(d, k)]].bounds


@dataclass(frozen=True)
class BandwidthPolicy:
    """``silverman`` (per cell) or ``fixed`` bandwidth."""

    kind: str = "silverman"
    value: float = None

    @classmethod
    def parse(cls, text) -> "BandwidthPolicy":
        if isinstance(text, BandwidthPolicy):
            return text
        if text is None or text == "silverman":
            return cls("silverman")
        if isinstance(text, str) and text.startswith("fixed:"):
            try:
                h = float(text.split(":", 1)[1])
            except ValueError:
                h = -1.0
            if h > 0:
                return cls("fixed", h)
        raise SpecificationError(f"bandwidth policy must be 'silverman' or 'fixed:<h>', got {text!r}")

    def __str__(self):
        return "silverman" if self.kind == "silverman" else f"fixed:{self.value:g}"


def silverman_bandwidth(x) -> float:
    """``0.9 * min(sd, IQR / 1.34) * n^(-1/5)``."""
    x = np.asarray(x, dtype=float)
    sd = np.std(x, ddof=1) if x.size > 1 else 0.0
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34) if q75 > q25 else sd
    if spread <= 0:
        spread = max(abs(float(np.mean(x))), 1.0) * 1e-3
    return 0.9 * spread * x.size ** (-0.2)


def _tail_bounds(x, alpha=None) -> tuple:
    # linear extrapolation of the empirical quantile function to 0 and 1
    x = np.asarray(x, dtype=float)
    if alpha is None:
        alpha = min(0.05, max(TAIL_QUANTILE, 5.0 / x.size))
    q1, q2, q3, q4 = np.quantile(x, [alpha, 2 * alpha, 1 - 2 * alpha, 1 - alpha])
    return 2 * q1 - q2, 2 * q4 - q3


class _CellKde:
    """Binned Gaussian KDE of one cell, tabulated once and splined.

    With ``support=(lo, hi)`` the estimate is reflected at both ends and
    set to zero outside, which removes the first-order loss of mass at the
    support boundary.
    """

    def __init__(self, y, h, support=None):
        self.h = h
        lo, hi = y.min() - 6 * h, y.max() + 6 * h
        if support is not None:
            lo, hi = min(lo, support[0] - 6 * h), max(hi, support[1] + 6 * h)
        grid = np.linspace(lo, hi, _KDE_BINS)
        step = grid[1] - grid[0]
        # linear binning
        pos = (y - lo) / step
        left = np.clip(np.floor(pos).astype(np.int64), 0, _KDE_BINS - 2)
        frac = pos - left
        counts = np.bincount(left, 1 - frac, _KDE_BINS) + np.bincount(left + 1, frac, _KDE_BINS)
        half = min(_KDE_BINS - 1, int(np.ceil(6 * h / step)))
        offsets = np.arange(-half, half + 1) * step
        kernel = np.exp(-0.5 * (offsets / h) ** 2) / (h * np.sqrt(2 * np.pi))
        dens = np.maximum(fftconvolve(counts, kernel, mode="same") / y.size, 0.0)
        if support is not None:
            raw = CubicSpline(grid, dens, extrapolate=False)
            a, b = support
            grid = np.linspace(a, b, _KDE_BINS)
            step = grid[1] - grid[0]
            dens = sum(np.nan_to_num(raw(x), nan=0.0) for x in (grid, 2 * a - grid, 2 * b - grid))
            dens = np.maximum(dens, 0.0)
        self.lo, self.hi = grid[0], grid[-1]
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * step)])
        total = cdf[-1]
        self._pdf = CubicSpline(grid, dens / total, extrapolate=False)
        self._cdf = CubicSpline(grid, cdf / total, extrapolate=False)

    def _snap(self, y):
        # integration round-off can leave the path a hair past an endpoint
        slack = 1e-9 * (self.hi - self.lo)
        y = np.asarray(y, dtype=float)
        y = np.where((y > self.hi) & (y <= self.hi + slack), self.hi, y)
        return np.where((y < self.lo) & (y >= self.lo - slack), self.lo, y)

    def pdf(self, y):
        out = self._pdf(self._snap(y))
        return np.nan_to_num(np.maximum(out, 0.0), nan=0.0)

    def cdf(self, y):
        y = self._snap(y)
        out = np.clip(self._cdf(y), 0.0, 1.0)
        out = np.where(y >= self.hi, 1.0, out)
        return np.nan_to_num(out, nan=0.0)


class EmpiricalDensity(DensityProvider):
    """Kernel estimate of the joint density from a sample.

    ``joint_density(d, y, z) = Pr_n(D = d | z) * kde_{dz}(y)``, floored at
    ``DENSITY_FLOOR`` inside the declared support of the cell's unique
    outcome. Supports are pooled over all ``z`` that share a unique outcome.

    Parameters
    ----------
    data : Dataset
    emap : ExclusionMap
    bandwidth : str or BandwidthPolicy
        ``"silverman"`` (per cell) or ``"fixed:<h>"``.
    boundary : {"reflect", "none"}
        ``"reflect"`` mirrors each cell's kernel estimate at the support
        endpoints of its unique outcome; ``"none"`` keeps the plain
        estimate with Gaussian tails outside the support.
    """

    mode = "empirical"

    def __init__(self, data: Dataset, emap: ExclusionMap, bandwidth="silverman", boundary="reflect"):
        super().__init__(emap)
        self.bandwidth = BandwidthPolicy.parse(bandwidth)
        J, nz = emap.num_alternatives, emap.n_z
        if len(data) == 0:
            raise DataError("empty dataset")
        if data.d.max() > J or data.z.max() > nz:
            raise DataError(f"data labels exceed J = {J} alternatives or N_Z = {nz} semi-IV values")
        missing = [
            (d, z)
            for d, z in product(range(1, J + 1), range(1, nz + 1))
            if not np.any((data.d == d) & (data.z == z))
        ]
        if missing:
            raise DataInsufficiencyError(missing)
        self.n = len(data)
        self._z_freq = np.bincount(data.z - 1, minlength=nz) / len(data)
        self.boundary = boundary
        if boundary not in ("reflect", "none"):
            raise SpecificationError(f"boundary must be 'reflect' or 'none', got {boundary!r}")
        self._support = {}
        for (d, k), col in emap.column_index.items():
            zs = [z for z in range(1, nz + 1) if emap.spec.label(d, z) == k]
            pooled = data.y[(data.d == d) & np.isin(data.z, zs)]
            self._support[(d, k)] = _tail_bounds(pooled) if pooled.size > 1 else (pooled[0], pooled[0])
        self._prob = np.zeros((nz, J))
        self._kde = {}
        self._cell_bounds = {}
        self.bandwidths = np.zeros((nz, J))
        for z in range(1, nz + 1):
            in_z = data.z == z
            n_z = in_z.sum()
            for d in range(1, J + 1):
                y = data.y[in_z & (data.d == d)]
                self._prob[z - 1, d - 1] = y.size / n_z
                h = silverman_bandwidth(y) if self.bandwidth.kind == "silverman" else self.bandwidth.value
                self.bandwidths[z - 1, d - 1] = h
                sup = self._support[(d, emap.spec.label(d, z))]
                reflect = boundary == "reflect" and sup[1] > sup[0]
                self._kde[(d, z)] = _CellKde(y, h, sup if reflect else None)
                self._cell_bounds[(d, z)] = _tail_bounds(y) if y.size > 1 else (y[0], y[0])

    @property
    def z_marginal(self) -> np.ndarray:
        return self._z_freq

    def raw_density(self, d, y, z):
        """Kernel estimate without the support floor."""
        d, y, z = self._cells(d, y, z)
        out = np.zeros(y.shape)
        for (dd, zz), kde in self._kde.items():
            mask = (d == dd) & (z == zz)
            if mask.any():
                out[mask] = self._prob[zz - 1, dd - 1] * kde.pdf(y[mask])
        return out

    def _inside(self, d, y, z):
        lo = np.empty(y.shape)
        hi = np.empty(y.shape)
        for (dd, zz) in self._kde:
            mask = (d == dd) & (z == zz)
            lo[mask], hi[mask] = self.cell_support(dd, zz)
        return (y >= lo) & (y <= hi)

    def floor_binds(self, d, y, z):
        """Mask of evaluations where the floor replaced the kernel estimate."""
        d, y, z = self._cells(d, y, z)
        return self._inside(d, y, z) & (self.raw_density(d, y, z) < DENSITY_FLOOR)

    def joint_density(self, d, y, z):
        d, y, z = self._cells(d, y, z)
        raw = self.raw_density(d, y, z)
        return np.where(self._inside(d, y, z), np.maximum(raw, DENSITY_FLOOR), raw)

    def joint_cdf(self, d, y, z):
        d, y, z = self._cells(d, y, z)
        out = np.zeros(y.shape)
        for (dd, zz), kde in self._kde.items():
            mask = (d == dd) & (z == zz)
            if mask.any():
                out[mask] = self._prob[zz - 1, dd - 1] * kde.cdf(y[mask])
        return out

    def cell_probability(self, d, z) -> float:
        return float(self._prob[z - 1, d - 1])

    def support(self, d: int, k: int) -> tuple:
        return tuple(float(v) for v in self._support[(d, k)])

    def raw_cell_bounds(self, d: int, z: int) -> tuple:
        """Tail-extrapolated bounds from cell ``(d, z)`` alone."""
        return tuple(float(v) for v in self._cell_bounds[(d, z)])


def analytic_density(dgp: DgpSpec) -> AnalyticDensity:
    return AnalyticDensity(dgp)


def empirical_density(
    data: Dataset, emap: ExclusionMap, bandwidth="silverman", boundary="reflect"
) -> EmpiricalDensity:
    return EmpiricalDensity(data, emap, bandwidth, boundary)


@dataclass(frozen=True)
class SupportBounds:
    """``q(0)`` and ``q(1)`` of every unique outcome, in chi column order."""

    lo: np.ndarray
    hi: np.ndarray
    labels: list
    warnings: tuple = field(default=())
    method: str = "analytic"

    @property
    def width(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    def to_dict(self) -> dict:
        return {
            "labels": [list(lab) for lab in self.labels],
            "lo": self.lo.tolist(),
            "hi": self.hi.tolist(),
            "warnings": list(self.warnings),
            "method": self.method,
        }


def support_bounds(provider: DensityProvider, emap: ExclusionMap = None) -> SupportBounds:
    """Collect outcome supports and flag cells that disagree on a pooled support."""
    emap = provider.emap if emap is None else emap
    labels = emap.labels()
    lo = np.empty(len(labels))
    hi = np.empty(len(labels))
    notes = []
    for col, (d, k) in enumerate(labels):
        lo[col], hi[col] = provider.support(d, k)
        if not lo[col] < hi[col]:
            raise DataError(f"degenerate support for outcome ({d}, {k}): [{lo[col]}, {hi[col]}]")
        if isinstance(provider, EmpiricalDensity):
            zs = [z for z in range(1, emap.n_z + 1) if emap.spec.label(d, z) == k]
            cells = [provider.raw_cell_bounds(d, z) for z in zs]
            max_lo = max(c[0] for c in cells)
            min_hi = min(c[1] for c in cells)
            tol = 0.01 * (hi[col] - lo[col])
            if max_lo > min_hi + tol:
                msg = (
                    f"possible exclusion violation for outcome ({d}, {k}): cells z={zs}"
                    f" have disjoint supports (max lower {max_lo:.4g} > min upper {min_hi:.4g})"
                )
                notes.append(msg)
                warnings.warn(msg, stacklevel=2)
    return SupportBounds(lo, hi, labels, tuple(notes), provider.mode)


def export_density_lattice(provider: DensityProvider, path, n_points: int = 201) -> None:
    """Write ``f(d, y, z)`` on a y-lattice spanning each cell's support."""
    emap = provider.emap
    with open(path, "w", newline="") as fh:
        fh.write("#schema=semiiv.density/1\n")
        writer = csv.writer(fh)
        writer.writerow(["d", "z", "y", "density"])
        for z, d in product(range(1, emap.n_z + 1), range(1, emap.num_alternatives + 1)):
            lo, hi = provider.cell_support(d, z)
            ys = np.linspace(lo, hi, n_points)
            for y, f in zip(ys, provider.joint_density(d, ys, z)):
                writer.writerow([d, z, repr(float(y)), repr(float(f))])
