"""Selection probabilities, ranks, counterfactuals and treatment effects
recovered from a solved path.

Everything rests on rank invariance: an individual keeps the same rank
``eta`` in every potential outcome, so inverting one outcome function and
feeding the rank into another maps an observed outcome to its counterfactual.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from itertools import combinations, product

import numpy as np
from scipy.interpolate import PchipInterpolator

from .density import DensityProvider
from .exceptions import DomainError, SpecificationError
from .exclusion import ExclusionMap
from .path import MonotonePath

__all__ = [
    "RecoveredModel",
    "EffectsTable",
    "recover_selection_probs",
    "rank_of",
    "counterfactual",
    "treatment_effects",
    "RENORMALIZATION_WARN",
    "QTE_LEVELS",
]

log = logging.getLogger(__name__)

RENORMALIZATION_WARN = 1e-2
QTE_LEVELS = tuple(np.round(np.arange(1, 10) / 10, 1))
_SUPPORT_SLACK = 1e-9


def _segments(mask):
    """``(start, stop)`` index pairs of the maximal runs of True."""
    out, i = [], 0
    while i < mask.size:
        if mask[i]:
            j = i
            while j + 1 < mask.size and mask[j + 1]:
                j += 1
            out.append((i, j + 1))
            i = j + 1
        else:
            i += 1
    return out


@dataclass
class RecoveredModel:
    """Primitives recovered from a solved path.

    Attributes
    ----------
    path : MonotonePath
    emap : ExclusionMap
    probabilities : ndarray
        ``p(d | eta, z)`` of shape ``(len(grid), N_Z, J)``; NaN on
        unidentified ranks.
    row_sum_deviation : float
        Largest ``|sum_d p - 1|`` before renormalization.
    z_weights : ndarray
        Semi-IV distribution used for weighted summaries.
    """

    path: MonotonePath
    emap: ExclusionMap
    probabilities: np.ndarray
    row_sum_deviation: float
    z_weights: np.ndarray
    _pieces: list = field(default=None, repr=False)

    def __post_init__(self):
        grid, values = self.path.grid, self.path.values
        pieces = []
        for a, b in _segments(self.path.identified):
            if b - a < 2:
                continue
            fwd = [PchipInterpolator(grid[a:b], values[a:b, c]) for c in range(self.emap.n_q)]
            inv = [PchipInterpolator(values[a:b, c], grid[a:b]) for c in range(self.emap.n_q)]
            pieces.append((grid[a], grid[b - 1], fwd, inv, values[a:b]))
        if not pieces:
            raise SpecificationError("path has no identified stretch of two or more grid points")
        self._pieces = pieces

    @property
    def grid(self) -> np.ndarray:
        return self.path.grid

    def outcome(self, col: int, eta):
        """``q_col(eta)``; NaN on unidentified ranks."""
        eta = np.asarray(eta, dtype=float)
        out = np.full(eta.shape, np.nan)
        for lo, hi, fwd, _, _ in self._pieces:
            sel = (eta >= lo) & (eta <= hi)
            out[sel] = fwd[col](eta[sel])
        return out

    def inverse(self, col: int, y, clip: bool = False):
        """Rank of outcome ``y`` in unique outcome ``col``.

        With ``clip=True`` outcomes below (above) the identified range map to
        its lowest (highest) rank instead of raising. This suits samples whose
        extreme draws fall just outside the estimated support.

        Raises
        ------
        DomainError
            ``y`` lies outside the identified range and ``clip`` is off.
        """
        y = np.asarray(y, dtype=float)
        out = np.full(y.shape, np.nan)
        pieces = self._pieces
        for lo, hi, _, inv, vals in pieces:
            ylo, yhi = vals[0, col], vals[-1, col]
            slack = _SUPPORT_SLACK * max(1.0, abs(yhi - ylo))
            sel = (y >= ylo - slack) & (y <= yhi + slack)
            out[sel] = np.clip(inv[col](np.clip(y[sel], ylo, yhi)), lo, hi)
        if clip and pieces:
            first, last = pieces[0], pieces[-1]
            out[np.isnan(out) & (y < first[4][0, col])] = first[0]
            out[np.isnan(out) & (y > last[4][-1, col])] = last[1]
        if np.any(np.isnan(out)):
            bad = y[np.isnan(out)].ravel()[0]
            d, k = self.emap.labels()[col]
            raise DomainError(f"outcome {bad:.6g} is outside the identified range of q_{d}_{k}")
        return out


def recover_selection_probs(
    path: MonotonePath, emap: ExclusionMap, density: DensityProvider, z_weights=None
) -> RecoveredModel:
    """``p(d | eta, z) = f(d, q(eta) | z) / eta'(q(eta))``, renormalized over ``d``.

    ``eta'`` is the derivative of the shape-preserving cubic inverse of each
    path column. The pre-renormalization deviation of the row sums is kept
    on the result and a warning is logged above ``RENORMALIZATION_WARN``.
    """
    grid, values = path.grid, path.values
    J, nz = emap.num_alternatives, emap.n_z
    probs = np.full((grid.size, nz, J), np.nan)
    for a, b in _segments(path.identified):
        if b - a < 2:
            continue
        seg = values[a:b]
        slope = np.empty_like(seg)
        for c in range(emap.n_q):
            slope[:, c] = PchipInterpolator(seg[:, c], grid[a:b]).derivative()(seg[:, c])
        for z, d in product(range(1, nz + 1), range(1, J + 1)):
            c = emap.column(d, z)
            f = density.joint_density(d, seg[:, c], z)
            probs[a:b, z - 1, d - 1] = f / slope[:, c]
    sums = probs.sum(axis=2)
    deviation = float(np.nanmax(np.abs(sums - 1.0))) if np.any(np.isfinite(sums)) else float("nan")
    if deviation > RENORMALIZATION_WARN:
        log.warning(
            "selection probabilities needed a renormalization of %.3g; check the solver residuals", deviation
        )
    probs = probs / sums[..., None]
    weights = np.asarray(density.z_marginal if z_weights is None else z_weights, dtype=float)
    return RecoveredModel(path, emap, probs, deviation, weights)


def rank_of(y, d: int, z: int, model: RecoveredModel, clip: bool = False):
    """Rank ``eta`` of outcome ``y`` observed in cell ``(d, z)``.

    ``clip`` maps outcomes beyond the identified range to the end ranks
    instead of raising :class:`DomainError`.
    """
    return model.inverse(model.emap.column(d, z), y, clip)


def counterfactual(y, source: tuple, target: tuple, model: RecoveredModel, clip: bool = False):
    """Outcome in cell ``target = (d', z')`` of whoever got ``y`` in ``source = (d, z)``."""
    eta = rank_of(y, source[0], source[1], model, clip)
    return model.outcome(model.emap.column(*target), eta)


@dataclass
class EffectsTable:
    """Individual effects on the rank grid plus their summaries.

    ``columns`` maps a label ``"d'-d|z'-z"`` (effect of ``d'`` against ``d``
    with semi-IV ``z'`` under ``d'`` and ``z`` under ``d``) to the effect at
    each grid rank.
    """

    grid: np.ndarray
    columns: dict
    summary: dict
    weighted_ate: dict
    z_policy: str

    def to_csv(self, path) -> None:
        names = list(self.columns)
        with open(path, "w", newline="") as fh:
            fh.write("#schema=semiiv.effects/1\n")
            writer = csv.writer(fh)
            writer.writerow(["eta"] + [f"ite[{n}]" for n in names])
            for i, eta in enumerate(self.grid):
                writer.writerow([repr(float(eta))] + [repr(float(self.columns[n][i])) for n in names])

    def to_dict(self) -> dict:
        return {
            "z_policy": self.z_policy,
            "effects": self.summary,
            "weighted_ate": self.weighted_ate,
            "qte_levels": list(QTE_LEVELS),
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _z_pairs(nz, z_policy, z0, z1):
    if z_policy == "all-pairs":
        return list(product(range(1, nz + 1), repeat=2))
    if z_policy == "observed":
        return [(z, z) for z in range(1, nz + 1)]
    if z_policy == "fixed":
        if z0 is None or z1 is None:
            raise SpecificationError("z_policy 'fixed' needs z0 and z1")
        if not (1 <= z0 <= nz and 1 <= z1 <= nz):
            raise SpecificationError(f"z0 and z1 must lie in 1..{nz}")
        return [(int(z0), int(z1))]
    raise SpecificationError(f"unknown z_policy {z_policy!r}; use all-pairs, observed or fixed")


def treatment_effects(model: RecoveredModel, z_policy: str = "all-pairs", z0=None, z1=None) -> EffectsTable:
    """Effects ``q_{d', k(d', z')}(eta) - q_{d, k(d, z)}(eta)`` on the grid.

    For ``J = 2`` the effect is of alternative 2 against alternative 1; for
    more alternatives every pair ``d < d'`` gets its own table. The ATE is
    the trapezoid mean over identified ranks (their length is reported), and
    ``QTE(u)`` is the difference of the marginal ``u``-quantiles, which
    equals the effect at rank ``u``. The weighted ATE averages the
    same-``z`` effects over the semi-IV distribution.
    """
    emap = model.emap
    grid = model.grid
    pairs = _z_pairs(emap.n_z, z_policy, z0, z1)
    alts = list(combinations(range(1, emap.num_alternatives + 1), 2))
    ok = model.path.identified
    columns, summary, weighted = {}, {}, {}
    for d, d1 in alts:
        same_z = {}
        for za, zb in pairs:
            ite = model.path.values[:, emap.column(d1, zb)] - model.path.values[:, emap.column(d, za)]
            name = f"{d1}-{d}|{zb}-{za}"
            columns[name] = ite
            mass = 0.0
            integral = 0.0
            for a, b in _segments(ok):
                if b - a >= 2:
                    integral += np.trapezoid(ite[a:b], grid[a:b])
                    mass += grid[b - 1] - grid[a]
            ate = integral / mass if mass > 0 else float("nan")
            qte = {}
            for u in QTE_LEVELS:
                hi_q = model.outcome(emap.column(d1, zb), u)
                lo_q = model.outcome(emap.column(d, za), u)
                qte[f"{u:.1f}"] = float(hi_q - lo_q)
            summary[name] = {
                "treated": d1,
                "control": d,
                "z_treated": zb,
                "z_control": za,
                "ate": float(ate),
                "identified_mass": float(mass),
                "qte": qte,
            }
            if za == zb:
                same_z[za] = ate
        if len(same_z) == emap.n_z:
            w = model.z_weights / model.z_weights.sum()
            weighted[f"{d1}-{d}"] = float(sum(w[z - 1] * same_z[z] for z in same_z))
    return EffectsTable(grid, columns, summary, weighted, z_policy)
