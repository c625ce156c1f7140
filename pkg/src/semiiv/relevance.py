"""Relevance diagnostics: where does the square system lose rank?

The profile tracks the normalized determinant ``nu = det / prod(row norms)``
of ``M~_Q(eta)`` (analytic mode) or of ``M_Q(q(eta))`` along a solved path.
Because ``M = M~ H`` with ``H`` a positive diagonal matrix, both vanish at
the same ranks and share their sign.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq, minimize_scalar

from .dgp import DgpSpec
from .exceptions import SpecificationError
from .exclusion import ExclusionMap
from .path import MonotonePath
from .system import OutcomeSystem, assemble_m_tilde, normalized_det, select_rows

__all__ = ["RelevanceProfile", "relevance_profile", "DELTA_SING", "DEFICIENCY_TOL", "VERDICTS"]

DELTA_SING = 1e-6
DEFICIENCY_TOL = 1e-5
_DIP_SCREEN = 1e-2
_FLAT_RUN = 10
VERDICTS = ("identified", "isolated-singularities", "interval-degenerate", "rank-deficient")


@dataclass
class RelevanceProfile:
    """Determinant and rank of the square system over a rank grid.

    Attributes
    ----------
    singularities : list of (float, int)
        ``(eta*, deficiency)`` for every isolated zero of the determinant.
    intervals : list of (float, float)
        Stretches with ``|nu| < delta`` over three or more grid points.
    rows : tuple of int
        0-based semi-IV rows of the square system.
    overidentified : bool
        Two or more row subsets give a well-conditioned system.
    """

    grid: np.ndarray
    det: np.ndarray
    nu: np.ndarray
    rank: np.ndarray
    singularities: list
    intervals: list
    verdict: str
    rows: tuple
    overidentified: bool
    source: str
    delta: float = DELTA_SING
    notes: list = field(default_factory=list)

    @property
    def min_abs_nu(self) -> float:
        return float(np.min(np.abs(self.nu)))

    def summary(self) -> dict:
        return {
            "verdict": self.verdict,
            "source": self.source,
            "rows": [r + 1 for r in self.rows],
            "overidentified": self.overidentified,
            "singularities": [{"eta": float(e), "deficiency": int(k)} for e, k in self.singularities],
            "degenerate_intervals": [[float(a), float(b)] for a, b in self.intervals],
            "min_abs_normalized_det": self.min_abs_nu,
            "delta_sing": self.delta,
            "grid_size": int(self.grid.size),
            "notes": list(self.notes),
        }

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("#schema=semiiv.relevance/1\n")
            fh.write("eta,det,normalized_det,rank\n")
            for e, d, n, r in zip(self.grid, self.det, self.nu, self.rank):
                fh.write(f"{float(e)!r},{float(d)!r},{float(n)!r},{int(r)}\n")

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _matrix_fn(emap: ExclusionMap, source, density=None):
    """Return ``(eta -> full N_Z x N_Q matrix, label)``."""
    if isinstance(source, DgpSpec):
        return (lambda eta: assemble_m_tilde(eta, emap, source)), "selection-probabilities"
    if isinstance(source, MonotonePath):
        if density is None:
            raise SpecificationError("a density provider is needed to profile a solved path")
        ok = source.identified
        interp = PchipInterpolator(source.grid[ok], source.values[ok], extrapolate=True)
        sys = OutcomeSystem(emap, density, rows=tuple(range(emap.n_q)))
        return (lambda eta: sys.full(np.clip(interp(eta), sys.lo, sys.hi))), "path-densities"
    raise SpecificationError("relevance source must be a DgpSpec or a MonotonePath")


def _deficiency(m) -> int:
    norms = np.linalg.norm(m, axis=1)
    norms[norms == 0] = 1.0
    s = np.linalg.svd(m / norms[:, None], compute_uv=False)
    return max(1, int(np.sum(s <= DEFICIENCY_TOL * s[0])))


def relevance_profile(
    emap: ExclusionMap,
    source,
    grid=None,
    density=None,
    rows=None,
    delta: float = DELTA_SING,
) -> RelevanceProfile:
    """Profile the relevance of the square system over ``grid``.

    Parameters
    ----------
    emap : ExclusionMap
    source : DgpSpec or MonotonePath
        A DGP (uses ``M~(eta)``) or a solved path (uses ``M(q(eta))``, which
        then also needs ``density``).
    grid : array_like, optional
        At least 101 increasing ranks; defaults to 1001 points on [0, 1].
    rows : sequence of int, optional
        Frozen row subset; chosen at ``eta = 0.5`` when ``N_Z > N_Q``.
    """
    grid = np.linspace(0.0, 1.0, 1001) if grid is None else np.asarray(grid, dtype=float)
    if grid.size < 101:
        raise SpecificationError("relevance grid needs at least 101 points")
    mat, label = _matrix_fn(emap, source, density)
    n_q = emap.n_q
    notes = []
    passing = 1
    if rows is None:
        if emap.n_z > n_q:
            rows, passing = select_rows(mat(0.5), n_q)
        else:
            rows = tuple(range(n_q))
    rows = tuple(rows)
    overidentified = emap.n_z > n_q and passing >= 2

    def sub(eta):
        return mat(eta)[list(rows)]

    def nu_fn(eta):
        return normalized_det(sub(eta))

    dets = np.empty(grid.size)
    nus = np.empty(grid.size)
    ranks = np.empty(grid.size, dtype=np.int64)
    for i, eta in enumerate(grid):
        m = sub(eta)
        dets[i] = np.linalg.det(m)
        nus[i] = normalized_det(m)
        s = np.linalg.svd(m, compute_uv=False)
        ranks[i] = int(np.sum(s > delta * s[0])) if s[0] > 0 else 0

    small = np.abs(nus) < delta
    intervals = []
    flat_zeros, flat_runs = [], []
    i = 0
    while i < grid.size:
        if small[i]:
            j = i
            while j + 1 < grid.size and small[j + 1]:
                j += 1
            if j - i + 1 >= 3:
                # a zero of order >= 2 (rank drop >= 2) also flattens |nu|:
                # short runs around such a point are isolated, not intervals
                lo_e, hi_e = grid[max(i - 1, 0)], grid[min(j + 1, grid.size - 1)]
                fit = minimize_scalar(
                    lambda e: abs(nu_fn(e)), bounds=(lo_e, hi_e), method="bounded", options={"xatol": 1e-10}
                )
                if j - i + 1 <= _FLAT_RUN and _deficiency(sub(fit.x)) >= 2:
                    flat_zeros.append(float(fit.x))
                    flat_runs.append((i - 1, j + 1))
                else:
                    intervals.append((float(grid[i]), float(grid[j])))
            i = j + 1
        else:
            i += 1

    def in_interval(eta):
        return any(a <= eta <= b for a, b in intervals)

    roots = list(flat_zeros)
    for i in range(grid.size - 1):
        a, b = grid[i], grid[i + 1]
        if in_interval(a) or in_interval(b) or any(i0 <= i <= j0 for i0, j0 in flat_runs):
            continue
        if nus[i] == 0.0:
            if not roots or roots[-1] != a:
                roots.append(float(a))
        elif nus[i] * nus[i + 1] < 0:
            roots.append(brentq(nu_fn, a, b, xtol=1e-14, rtol=4 * np.finfo(float).eps))
    if nus[-1] == 0.0 and not in_interval(grid[-1]):
        roots.append(float(grid[-1]))
    # dips: local minima of |nu| without a sign change
    absn = np.abs(nus)
    for i in range(1, grid.size - 1):
        strict = absn[i] < absn[i - 1] or absn[i] < absn[i + 1]
        local_min = absn[i] <= absn[i - 1] and absn[i] <= absn[i + 1] and strict
        if local_min and absn[i] < _DIP_SCREEN and nus[i - 1] * nus[i + 1] > 0:
            if in_interval(grid[i]) or any(abs(r - grid[i]) <= grid[i + 1] - grid[i - 1] for r in roots):
                continue
            res = minimize_scalar(
                lambda e: abs(nu_fn(e)),
                bounds=(grid[i - 1], grid[i + 1]),
                method="bounded",
                options={"xatol": 1e-10},
            )
            if res.fun < delta:
                roots.append(float(res.x))
                notes.append(f"determinant touches zero without changing sign at eta = {res.x:.6f}")
    roots.sort()
    singularities = [(r, _deficiency(sub(r))) for r in roots]

    step = np.min(np.diff(grid))
    etas = [r for r, _ in singularities]
    for a, b in zip(etas[:-1], etas[1:]):
        # zeros the grid cannot separate are treated as a degenerate stretch
        if b - a < 2 * step:
            intervals.append((a, b))
            notes.append(f"singularities at {a:.6f} and {b:.6f} are closer than two grid steps")
    if intervals:
        verdict = "interval-degenerate"
    elif any(k >= 2 for _, k in singularities):
        verdict = "rank-deficient"
    elif singularities:
        verdict = "isolated-singularities"
    else:
        verdict = "identified"
    return RelevanceProfile(
        grid=grid,
        det=dets,
        nu=nus,
        rank=ranks,
        singularities=singularities,
        intervals=intervals,
        verdict=verdict,
        rows=rows,
        overidentified=bool(overidentified),
        source=label,
        delta=delta,
        notes=notes,
    )
