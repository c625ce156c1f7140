"""Assembly of ``M(q) = chi ⊙ F`` and ``M~(eta) = chi ⊙ P`` and related algebra.

``M`` has one row per semi-IV value and one column per unique outcome;
entry ``(z, col(d, k))`` is the joint density of ``(D = d, Y = q_col)``
given ``z`` whenever cell ``(d, z)`` reads from outcome ``(d, k)``. When
``N_Z > N_Q`` a square system ``M_Q`` is formed from a frozen subset of rows.
"""

from __future__ import annotations

from itertools import combinations

import numpy as np

from .density import DensityProvider
from .dgp import DgpSpec
from .exceptions import DomainError, SpecificationError
from .exclusion import ExclusionMap

__all__ = [
    "OutcomeSystem",
    "assemble_m",
    "assemble_m_tilde",
    "h_matrix",
    "adjugate",
    "normalized_det",
    "desingularized_field",
    "select_rows",
    "identity_residual",
]


def adjugate(m) -> np.ndarray:
    """Classical adjoint by cofactor expansion (valid for singular ``m``)."""
    m = np.asarray(m, dtype=float)
    n = m.shape[0]
    if n == 1:
        return np.ones((1, 1))
    idx = np.arange(n)
    minors = np.empty((n, n, n - 1, n - 1))
    for i in range(n):
        rows = idx[idx != i]
        for j in range(n):
            minors[i, j] = m[np.ix_(rows, idx[idx != j])]
    sign = (-1.0) ** (idx[:, None] + idx[None, :])
    return (sign * np.linalg.det(minors)).T


def normalized_det(m) -> float:
    """``det(m) / prod(row norms)``: scale free, bounded by 1 in magnitude."""
    m = np.asarray(m, dtype=float)
    norms = np.linalg.norm(m, axis=1)
    if np.any(norms == 0):
        return 0.0
    return float(np.linalg.det(m / norms[:, None]))


def select_rows(m, n_q: int, rel_tol: float = 1e-6):
    """Choose the ``n_q`` rows of ``m`` whose square submatrix has the largest
    smallest singular value (rows normalized first).

    Returns
    -------
    rows : tuple of int
        0-based row indices in increasing order.
    passing : int
        Number of subsets whose relative smallest singular value exceeds
        ``rel_tol``; two or more means the model is overidentified.
    """
    m = np.asarray(m, dtype=float)
    norms = np.linalg.norm(m, axis=1)
    norms[norms == 0] = 1.0
    m = m / norms[:, None]
    best, best_val, passing = None, -1.0, 0
    for rows in combinations(range(m.shape[0]), n_q):
        s = np.linalg.svd(m[list(rows)], compute_uv=False)
        val = s[-1] / s[0] if s[0] > 0 else 0.0
        passing += val > rel_tol
        if val > best_val:
            best, best_val = rows, val
    return tuple(best), int(passing)


class OutcomeSystem:
    """``M(q)`` for a fixed exclusion map, density and row subset.

    Parameters
    ----------
    emap : ExclusionMap
    density : DensityProvider
    rows : sequence of int, optional
        0-based semi-IV rows forming the square system. Required when
        ``N_Z > N_Q`` unless :meth:`auto_rows` is used.
    """

    def __init__(self, emap: ExclusionMap, density: DensityProvider, rows=None):
        self.emap = emap
        self.density = density
        if rows is None:
            if emap.n_z != emap.n_q:
                raise SpecificationError(
                    f"N_Z = {emap.n_z} > N_Q = {emap.n_q}: a row subset is required"
                )
            rows = tuple(range(emap.n_z))
        rows = tuple(int(r) for r in rows)
        if len(rows) != emap.n_q or len(set(rows)) != len(rows) or not all(0 <= r < emap.n_z for r in rows):
            raise SpecificationError(f"rows must be {emap.n_q} distinct indices in [0, {emap.n_z})")
        self.rows = rows
        self._z, self._col, self._alt = emap.nonzero()
        labels = emap.labels()
        sup = np.array([density.support(d, k) for d, k in labels], dtype=float)
        self.lo, self.hi = sup[:, 0], sup[:, 1]
        self.labels = labels
        self.V = np.ones(emap.n_q)

    @classmethod
    def auto_rows(cls, emap, density, dgp: DgpSpec = None):
        """Build a system with rows chosen at the middle of the rank range."""
        if emap.n_z == emap.n_q:
            return cls(emap, density), 1
        probe = cls(emap, density, rows=tuple(range(emap.n_q)))
        if dgp is not None:
            mat = assemble_m_tilde(0.5, emap, dgp)
        else:
            mat = probe.full(0.5 * (probe.lo + probe.hi))
        rows, passing = select_rows(mat, emap.n_q)
        return cls(emap, density, rows), passing

    @property
    def width(self) -> np.ndarray:
        return self.hi - self.lo

    def check_domain(self, y, tol: float = 0.0) -> None:
        slack = tol * self.width
        bad = np.flatnonzero((y < self.lo - slack) | (y > self.hi + slack))
        if bad.size:
            c = bad[0]
            d, k = self.labels[c]
            raise DomainError(
                f"component q_{d}_{k} = {y[c]:.6g} outside its support [{self.lo[c]:.6g}, {self.hi[c]:.6g}]"
            )

    def full(self, y) -> np.ndarray:
        """All ``N_Z`` rows of ``M`` at outcome vector ``y`` (no domain check)."""
        y = np.asarray(y, dtype=float)
        out = np.zeros((self.emap.n_z, self.emap.n_q))
        out[self._z, self._col] = self.density.joint_density(self._alt + 1, y[self._col], self._z + 1)
        return out

    def m(self, y) -> np.ndarray:
        """Square system ``M_Q(y)``, evaluated at ``y`` clipped to the supports."""
        y = np.clip(np.asarray(y, dtype=float), self.lo, self.hi)
        return self.full(y)[list(self.rows)]

    def nu(self, y) -> float:
        return normalized_det(self.m(y))

    def rhs(self, y) -> np.ndarray:
        """``M_Q(y)^{-1} 1``; least squares when ``M_Q`` is exactly singular."""
        m = self.m(y)
        try:
            return np.linalg.solve(m, self.V)
        except np.linalg.LinAlgError:
            return np.linalg.lstsq(m, self.V, rcond=None)[0]

    def field(self, y) -> np.ndarray:
        """Desingularized field ``adj(M_Q(y)) 1``."""
        return adjugate(self.m(y)) @ self.V


def assemble_m(yvec, emap: ExclusionMap, density: DensityProvider, rows=None) -> np.ndarray:
    """``chi ⊙ F`` at outcome vector ``yvec``.

    Raises
    ------
    DomainError
        If a component lies outside the support of its unique outcome.
    """
    sys = OutcomeSystem(emap, density, rows if rows is not None else tuple(range(emap.n_q)))
    y = np.asarray(yvec, dtype=float)
    if y.shape != (emap.n_q,):
        raise SpecificationError(f"yvec must have length N_Q = {emap.n_q}")
    sys.check_domain(y)
    full = sys.full(y)
    return full if rows is None else full[list(rows)]


def assemble_m_tilde(eta: float, emap: ExclusionMap, dgp: DgpSpec, rows=None) -> np.ndarray:
    """``chi ⊙ P(eta)``: entry ``(z, col(d, k))`` is ``p(d | eta, z)``."""
    p = dgp.selection_probs(float(eta))
    z, col, alt = emap.nonzero()
    out = np.zeros((emap.n_z, emap.n_q))
    out[z, col] = p[z, alt]
    return out if rows is None else out[list(rows)]


def h_matrix(eta: float, dgp: DgpSpec) -> np.ndarray:
    """``diag(d eta / d y)`` along the true path, so that ``M = M~ H``."""
    return np.diag([1.0 / q.derivative(float(eta)) for q in dgp.outcomes])


def desingularized_field(yvec, emap: ExclusionMap, density: DensityProvider, rows=None) -> np.ndarray:
    """``g(y) = adj(M_Q(y)) 1``."""
    m = assemble_m(yvec, emap, density, rows)
    if m.shape[0] != m.shape[1]:
        raise SpecificationError("desingularized field needs a square system; pass rows")
    return adjugate(m) @ np.ones(m.shape[0])


def identity_residual(grid, values, emap: ExclusionMap, density: DensityProvider) -> np.ndarray:
    """``sum_d F(d, q_{col(d,z)}(eta) | z) - eta`` for every grid point and ``z``.

    Returns an array of shape ``(len(grid), N_Z)``; rows with NaN values
    (unidentified ranks) give NaN.
    """
    grid = np.asarray(grid, dtype=float)
    values = np.asarray(values, dtype=float)
    out = np.empty((grid.size, emap.n_z))
    for z in range(1, emap.n_z + 1):
        total = np.zeros(grid.size)
        for d in range(1, emap.num_alternatives + 1):
            total += density.joint_cdf(d, values[:, emap.column(d, z)], z)
        out[:, z - 1] = total - grid
    out[~np.all(np.isfinite(values), axis=1)] = np.nan
    return out
