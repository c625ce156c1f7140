"""Reference DGPs used by the tests, the shipped configs and the docs.

Logit coefficients are ``(N_Z, J)`` arrays with alternative 1 as the base
(zero column). For the two-alternative layouts the log odds of alternative 2
in cell ``z`` are ``a_z + b_z * eta``, and the determinant of ``M~`` for
the binary semi-IV layout vanishes exactly where the log odds ratio gap

    L(eta) = (a_1 - a_2 - a_3 + a_4) + (b_1 - b_2 - b_3 + b_4) * eta

crosses zero.
"""

from __future__ import annotations

import numpy as np

from .dgp import DgpSpec, LogitSelection, OutcomeFunction
from .exclusion import (
    alternative_specific,
    binary_semi_iv,
    conditional_semi_iv,
    full_exclusion,
)

__all__ = [
    "binary_regular",
    "binary_singular",
    "binary_irrelevant",
    "binary_additive",
    "standard_iv",
    "constant_selection",
    "conditional_regular",
    "overidentified",
    "three_alternatives",
    "deficiency_two",
    "ADDITIVE_PARAMS",
    "FIXTURES",
]

ADDITIVE_PARAMS = {"beta": 1.0, "delta": 2.0, "alpha0": 0.3, "alpha1": -0.5}


def _two_alt(a, b) -> LogitSelection:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return LogitSelection(np.column_stack([np.zeros_like(a), a]), np.column_stack([np.zeros_like(b), b]))


def _affine(*pairs):
    return tuple(OutcomeFunction("affine", a, b) for a, b in pairs)


_REGULAR_OUTCOMES = _affine((0.0, 1.0), (0.4, 1.2), (0.8, 1.0), (1.3, 0.8))


def binary_regular() -> DgpSpec:
    """Two binary semi-IVs, affine outcomes, no singularity (``L`` in [-2.2, -0.5])."""
    sel = _two_alt([-1.0, 0.5, 0.5, -0.2], [1.5, -0.5, 0.5, 0.2])
    return DgpSpec(binary_semi_iv(), _REGULAR_OUTCOMES, sel)


def binary_singular(family: str = "affine") -> DgpSpec:
    """Two binary semi-IVs with ``L(eta) = 2 eta - 1``: the odds ratios coincide at 0.5."""
    sel = _two_alt([-1.0, 0.3, 0.2, 0.5], [2.0, -1.0, 1.0, 0.0])
    if family == "affine":
        outs = _REGULAR_OUTCOMES
    elif family == "quadratic":
        outs = (
            OutcomeFunction("quadratic", 0.0, 1.0, 0.5),
            OutcomeFunction("quadratic", 0.5, 1.2, -0.3),
            OutcomeFunction("quadratic", 1.0, 1.5, 0.8),
            OutcomeFunction("quadratic", 1.5, 1.0, 0.4),
        )
    else:
        raise ValueError(f"unknown outcome family {family!r}")
    return DgpSpec(binary_semi_iv(), outs, sel)


def binary_irrelevant() -> DgpSpec:
    """Selection identical across all semi-IV values: no relevance anywhere."""
    sel = _two_alt([0.2] * 4, [0.8] * 4)
    return DgpSpec(binary_semi_iv(), _REGULAR_OUTCOMES, sel)


def binary_additive() -> DgpSpec:
    """Additive homogeneous-effect model with ``ADDITIVE_PARAMS`` and a unit-slope error.

    ``Y = beta + delta D + alpha0 W0 (1 - D) + alpha1 W1 D + (eta - 1/2)``,
    selection as in :func:`binary_regular`.
    """
    p = ADDITIVE_PARAMS
    base = p["beta"] - 0.5
    outs = _affine(
        (base, 1.0),
        (base + p["alpha0"], 1.0),
        (base + p["delta"], 1.0),
        (base + p["delta"] + p["alpha1"], 1.0),
    )
    return DgpSpec(binary_semi_iv(), outs, binary_regular().selection)


def standard_iv() -> DgpSpec:
    """J = 2, N_Z = 2, full exclusion; one affine and one quadratic outcome."""
    sel = _two_alt([-0.5, 0.6], [1.0, 0.8])
    outs = (OutcomeFunction("affine", 0.5, 1.0), OutcomeFunction("quadratic", 0.2, 0.8, 0.4))
    return DgpSpec(full_exclusion(2, 2), outs, sel)


def constant_selection() -> DgpSpec:
    """Standard IV with selection probabilities that do not move with eta."""
    sel = _two_alt([-0.4, 0.7], [0.0, 0.0])
    outs = _affine((0.0, 1.0), (1.0, 2.0))
    return DgpSpec(full_exclusion(2, 2), outs, sel)


def conditional_regular() -> DgpSpec:
    """J = 2, N_Z = 3: alternative 1 fully excluded, alternative 2 pooled on z = 2, 3."""
    sel = _two_alt([-0.5, 0.4, 1.0], [1.0, -0.6, 0.3])
    outs = _affine((0.0, 1.0), (0.5, 1.5), (1.0, 1.2))
    return DgpSpec(conditional_semi_iv(), outs, sel)


def overidentified() -> DgpSpec:
    """J = 2, N_Z = 4 with full exclusion: two unique outcomes, four equations."""
    sel = _two_alt([-1.0, -0.2, 0.4, 1.0], [1.0, 0.5, -0.3, 0.4])
    outs = (OutcomeFunction("affine", 0.0, 1.0), OutcomeFunction("affine", 0.5, 1.5))
    return DgpSpec(full_exclusion(2, 4), outs, sel)


def three_alternatives() -> DgpSpec:
    """J = 3 with one binary alternative-specific semi-IV each (N_Z = 8, N_Q = 6).

    Utilities need semi-IV interactions: with utilities additive in
    ``(w_1, w_2, w_3)`` every odds-ratio gap vanishes and so does ``det M~``.
    """
    spec = alternative_specific(3)
    a = [[0.7, -0.8], [-0.2, -0.7], [0.0, 0.6], [1.0, -1.2], [-1.0, 0.9], [0.1, -0.6], [-0.2, -1.1], [0.6, -0.4]]
    b = [[0.6, 1.4], [-1.2, -1.5], [0.4, -0.7], [1.0, 0.4], [-0.9, 0.2], [-1.4, -0.6], [0.0, -1.1], [0.8, 0.9]]
    zero = np.zeros((8, 1))
    sel = LogitSelection(np.hstack([zero, a]), np.hstack([zero, b]))
    outs = _affine((0.0, 1.0), (0.3, 1.1), (0.6, 1.0), (0.9, 1.3), (1.2, 0.9), (1.5, 1.2))
    return DgpSpec(spec, outs, sel)


def deficiency_two() -> DgpSpec:
    """J = 3 standard IV whose three selection rows coincide at ``eta = 0.5``.

    ``intercept[z, d] = c_d - 0.5 * slope[z, d]``, so ``M~(0.5)`` has rank one
    (two semi-IV values simultaneously irrelevant).
    """
    c = np.array([0.0, 0.3, -0.2])
    slope = np.array([[0.0, 1.0, -0.5], [0.0, -0.8, 0.6], [0.0, 0.4, 1.2]])
    intercept = c[None, :] - 0.5 * slope
    outs = _affine((0.0, 1.0), (0.5, 1.2), (1.0, 0.9))
    return DgpSpec(full_exclusion(3, 3), outs, LogitSelection(intercept, slope))


FIXTURES = {
    "binary-regular": binary_regular,
    "binary-singular": binary_singular,
    "binary-irrelevant": binary_irrelevant,
    "binary-additive": binary_additive,
    "standard-iv": standard_iv,
    "constant-selection": constant_selection,
    "conditional": conditional_regular,
    "overidentified": overidentified,
    "three-alternatives": three_alternatives,
    "deficiency-two": deficiency_two,
}
