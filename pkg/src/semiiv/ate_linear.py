"""Closed-form ATE in the additive homogeneous-effect model with two binary semi-IVs.

Model: ``Y = beta + delta D + alpha0 (1 - D) W0 + alpha1 D W1 + U`` with
``E[U | W0, W1] = 0``. Cell means are linear in the coefficients,
``E[Y | w0, w1] = A(p) (beta, delta, alpha0, alpha1)'`` with rows
``[1, p, (1 - p) w0, p w1]``, ``p = Pr(D = 1 | w0, w1)``. Cells are always
ordered (0,0), (1,0), (0,1), (1,1), i.e. semi-IV values z = 1, 2, 3, 4.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dgp import Dataset, DgpSpec
from .exceptions import DataError, SpecificationError, WeakRelevanceError

__all__ = [
    "CELLS",
    "LinearAteInputs",
    "LinearAteResult",
    "build_a_matrix",
    "estimate_linear_ate",
    "ate_weighted_formula",
    "odds_ratio_gap",
    "inputs_from_dataset",
    "inputs_from_dgp",
    "DET_FLOOR",
    "COND_CEILING",
]

CELLS = ((0, 0), (1, 0), (0, 1), (1, 1))
DET_FLOOR = 1e-8
COND_CEILING = 1e8
_AGREEMENT_TOL = 1e-9


@dataclass(frozen=True)
class LinearAteInputs:
    """Cell means ``E[Y | w0, w1]`` and treatment shares ``Pr(D = 1 | w0, w1)``.

    ``counts`` (observations per cell) is kept when built from data.
    """

    means: np.ndarray
    probs: np.ndarray
    counts: np.ndarray = field(default=None)

    def __post_init__(self):
        means = np.asarray(self.means, dtype=float)
        probs = np.asarray(self.probs, dtype=float)
        if means.shape != (4,) or probs.shape != (4,):
            raise SpecificationError("means and probs need one entry per cell (0,0), (1,0), (0,1), (1,1)")
        if not np.all(np.isfinite(means)):
            raise SpecificationError("cell means must be finite")
        if np.any(probs <= 0) or np.any(probs >= 1):
            raise SpecificationError("treatment shares must lie strictly inside (0, 1)")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "probs", probs)

    def to_dict(self) -> dict:
        doc = {"means": self.means.tolist(), "probs": self.probs.tolist(), "cells": [list(c) for c in CELLS]}
        if self.counts is not None:
            doc["counts"] = np.asarray(self.counts).tolist()
        return doc

    @classmethod
    def from_json(cls, path) -> "LinearAteInputs":
        try:
            doc = json.loads(Path(path).read_text())
            return cls(doc["means"], doc["probs"])
        except json.JSONDecodeError as exc:
            raise SpecificationError(f"{path}: invalid JSON ({exc})") from None
        except KeyError as exc:
            raise SpecificationError(f"{path}: missing key {exc}") from None


@dataclass(frozen=True)
class LinearAteResult:
    beta: float
    delta: float
    alpha0: float
    alpha1: float
    det: float
    cond: float
    odds_ratio_gap: float
    weighted_delta: float
    note: str = ""

    @property
    def coefficients(self) -> np.ndarray:
        return np.array([self.beta, self.delta, self.alpha0, self.alpha1])

    def to_dict(self) -> dict:
        return {
            "beta": self.beta,
            "delta": self.delta,
            "alpha0": self.alpha0,
            "alpha1": self.alpha1,
            "det_A": self.det,
            "cond_A": self.cond,
            "odds_ratio_gap": self.odds_ratio_gap,
            "delta_weighted_formula": self.weighted_delta,
            "note": self.note,
        }


def build_a_matrix(probs) -> np.ndarray:
    """4 x 4 design with columns ``(beta, delta, alpha0, alpha1)``."""
    p = np.asarray(probs, dtype=float)
    w0 = np.array([c[0] for c in CELLS], dtype=float)
    w1 = np.array([c[1] for c in CELLS], dtype=float)
    return np.column_stack([np.ones(4), p, (1 - p) * w0, p * w1])


def odds_ratio_gap(probs) -> float:
    """``log[o(0,0) / o(0,1)] - log[o(1,0) / o(1,1)]`` with ``o = p / (1 - p)``.

    ``det(A) = prod(1 - p) * (o00 o11 - o10 o01)``, so ``det(A)`` vanishes
    exactly when this gap does and has the same sign.
    """
    p = np.asarray(probs, dtype=float)
    lo = np.log(p) - np.log1p(-p)
    return float((lo[0] - lo[2]) - (lo[1] - lo[3]))


def _check_relevance(a, probs):
    det = float(np.linalg.det(a))
    cond = float(np.linalg.cond(a))
    gap = odds_ratio_gap(probs)
    if abs(det) < DET_FLOOR or not cond <= COND_CEILING:
        raise WeakRelevanceError(
            f"A is (nearly) singular: det = {det:.3g}, cond = {cond:.3g}, odds-ratio gap = {gap:.3g}",
            det=det,
            cond=cond,
            odds_ratio_gap=gap,
        )
    return det, cond, gap


def ate_weighted_formula(inputs: LinearAteInputs) -> float:
    """``delta`` as a probability-weighted sum of cell-mean differences.

    The three weighted differences add up to ``delta * det(A)``; the sum is
    divided by ``det(A)`` here.
    """
    p00, p10, p01, p11 = inputs.probs
    m00, m10, m01, m11 = inputs.means
    a = build_a_matrix(inputs.probs)
    det, _, _ = _check_relevance(a, inputs.probs)
    total = (
        (1 - p10) * p01 * (m11 - m00)
        + (1 - p11) * p01 * (m00 - m10)
        + (1 - p10) * p11 * (m00 - m01)
    )
    return float(total / det)


def estimate_linear_ate(inputs: LinearAteInputs) -> LinearAteResult:
    """Solve ``A theta = means`` and cross-check ``delta`` with the weighted formula.

    Raises
    ------
    WeakRelevanceError
        ``|det(A)| < 1e-8`` or ``cond(A) > 1e8``.
    """
    a = build_a_matrix(inputs.probs)
    det, cond, gap = _check_relevance(a, inputs.probs)
    theta = np.linalg.solve(a, inputs.means)
    weighted = ate_weighted_formula(inputs)
    note = ""
    if abs(weighted - theta[1]) > _AGREEMENT_TOL * max(1.0, abs(theta[1])):
        note = (
            f"weighted formula ({weighted:.12g}) and linear solve ({theta[1]:.12g}) disagree;"
            " this indicates an implementation error"
        )
    return LinearAteResult(
        beta=float(theta[0]),
        delta=float(theta[1]),
        alpha0=float(theta[2]),
        alpha1=float(theta[3]),
        det=det,
        cond=cond,
        odds_ratio_gap=gap,
        weighted_delta=weighted,
        note=note,
    )


def inputs_from_dataset(data: Dataset) -> LinearAteInputs:
    """Plain cell averages and treatment frequencies.

    ``z`` is decoded as 1 <-> (0,0), 2 <-> (1,0), 3 <-> (0,1), 4 <-> (1,1)
    and ``d = 2`` is the treated alternative.
    """
    if len(data) == 0:
        raise DataError("empty dataset")
    if data.d.max() > 2 or data.z.max() > 4:
        raise DataError("the additive ATE needs J = 2 alternatives and N_Z = 4 semi-IV cells")
    means, probs, counts = [], [], []
    for z in range(1, 5):
        sel = data.z == z
        n = int(sel.sum())
        if n < 1:
            raise DataError(f"semi-IV cell z = {z} has {n} observations")
        y = data.y[sel]
        means.append(y.mean())
        probs.append(np.mean(data.d[sel] == 2))
        counts.append(n)
    return LinearAteInputs(np.array(means), np.array(probs), np.array(counts))


def inputs_from_dgp(dgp: DgpSpec, nodes: int = 64) -> LinearAteInputs:
    """Population cell means and shares by Gauss-Legendre quadrature over ranks."""
    if dgp.exclusion.num_alternatives != 2 or dgp.exclusion.support_size != 4:
        raise SpecificationError("the additive ATE needs J = 2 alternatives and N_Z = 4 semi-IV cells")
    x, w = np.polynomial.legendre.leggauss(nodes)
    eta = 0.5 * (x + 1)
    w = 0.5 * w
    p = dgp.selection_probs(eta)  # (nodes, N_Z, J)
    means, probs = [], []
    for z in range(1, 5):
        m = 0.0
        for d in (1, 2):
            m += np.sum(w * p[:, z - 1, d - 1] * dgp.outcome(d, z)(eta))
        means.append(m)
        probs.append(np.sum(w * p[:, z - 1, 1]))
    return LinearAteInputs(np.array(means), np.array(probs))
