"""scikit-learn style estimators.

Observations are passed as an ``(n, 3)`` array with columns ``(d, y, z)``,
the layout of the dataset CSV files.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .ate_linear import estimate_linear_ate, inputs_from_dataset
from .dgp import Dataset, DgpSpec
from .exceptions import DataError, SpecificationError
from .exclusion import ExclusionSpec
from .inference import counterfactual, rank_of, treatment_effects
from .pipeline import run_solve
from .solver import SolverOptions

__all__ = ["SemiIVEstimator", "LinearSemiIVATE", "check_observations"]


def check_observations(X, num_alternatives=None, support_size=None) -> Dataset:
    """Validate an ``(n, 3)`` array of ``(d, y, z)`` rows and wrap it.

    Raises
    ------
    DataError
        Non-integer or out-of-range labels, or non-finite outcomes.
    """
    try:
        X = check_array(X, dtype=float, ensure_min_samples=1)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    if X.shape[1] != 3:
        raise DataError(f"expected 3 columns (d, y, z), got {X.shape[1]}")
    d, y, z = X[:, 0], X[:, 1], X[:, 2]
    for name, col, top in (("d", d, num_alternatives), ("z", z, support_size)):
        if np.any(col != np.round(col)) or np.any(col < 1):
            raise DataError(f"column {name} must hold positive integer labels")
        if top is not None and np.any(col > top):
            raise DataError(f"column {name} has labels above {top}")
    return Dataset(d.astype(np.int64), y, z.astype(np.int64))


class SemiIVEstimator(TransformerMixin, BaseEstimator):
    """Recover the unique potential-outcome functions from ``(d, y, z)`` data.

    Parameters
    ----------
    exclusion : ExclusionSpec
        Which ``(d, z)`` cells share an outcome function.
    bandwidth : str, default="silverman"
        Kernel bandwidth policy, ``"silverman"`` or ``"fixed:<h>"``.
    grid_size : int, default=1001
        Points of the rank grid.
    rtol, atol : float
        Integrator tolerances.
    backward : bool, default=False
        Also sweep backward and record the gap.
    rows : sequence of int, optional
        1-based semi-IV rows of the square system when overidentified.
    z_policy : {"all-pairs", "observed", "fixed"}, default="all-pairs"
        Semi-IV pairing of the treatment-effect table.
    out_of_support : {"clip", "raise"}, default="clip"
        What ``transform`` and ``predict`` do with outcomes beyond the
        identified range: map them to the end ranks, or raise DomainError.

    Attributes
    ----------
    path_ : MonotonePath
    model_ : RecoveredModel
    relevance_ : RelevanceProfile
    report_ : RunReport
    effects_ : EffectsTable
    exclusion_map_ : ExclusionMap
    """

    def __init__(
        self,
        exclusion=None,
        bandwidth="silverman",
        grid_size=1001,
        rtol=1e-8,
        atol=1e-10,
        backward=False,
        rows=None,
        z_policy="all-pairs",
        out_of_support="clip",
    ):
        self.exclusion = exclusion
        self.bandwidth = bandwidth
        self.grid_size = grid_size
        self.rtol = rtol
        self.atol = atol
        self.backward = backward
        self.rows = rows
        self.z_policy = z_policy
        self.out_of_support = out_of_support

    def _options(self) -> SolverOptions:
        rows = None if self.rows is None else tuple(self.rows)
        return SolverOptions(
            rtol=self.rtol, atol=self.atol, backward=self.backward, rows=rows, grid_size=self.grid_size
        )

    def _finish(self, art):
        self.report_ = art.report
        self.relevance_ = art.relevance
        self.exclusion_map_ = art.emap
        self.density_ = art.density
        self.bounds_ = art.bounds
        if art.error is not None:
            raise art.error
        self.path_ = art.path
        self.model_ = art.recovered
        self.effects_ = treatment_effects(self.model_, self.z_policy)
        return self

    def fit(self, X, y=None):
        """Estimate densities from ``X`` and solve for the outcome functions.

        Raises
        ------
        IdentificationError, NumericalError
            Propagated from the solve; ``report_`` is still set.
        """
        if not isinstance(self.exclusion, ExclusionSpec):
            raise SpecificationError("exclusion must be an ExclusionSpec")
        data = check_observations(X, self.exclusion.num_alternatives, self.exclusion.support_size)
        art = run_solve(data, self.exclusion, self._options(), self.bandwidth)
        return self._finish(art)

    def fit_dgp(self, dgp: DgpSpec):
        """Solve with the analytic densities of a known DGP."""
        if not isinstance(dgp, DgpSpec):
            raise SpecificationError("fit_dgp needs a DgpSpec")
        self.exclusion = dgp.exclusion
        return self._finish(run_solve(dgp, options=self._options()))

    def _clip(self) -> bool:
        if self.out_of_support not in ("clip", "raise"):
            raise SpecificationError(f"out_of_support must be 'clip' or 'raise', got {self.out_of_support!r}")
        return self.out_of_support == "clip"

    def transform(self, X):
        """Rank ``eta`` of every observation."""
        check_is_fitted(self, "model_")
        clip = self._clip()
        data = check_observations(X, self.exclusion.num_alternatives, self.exclusion.support_size)
        out = np.empty(len(data))
        for d, z in set(zip(data.d.tolist(), data.z.tolist())):
            sel = (data.d == d) & (data.z == z)
            out[sel] = rank_of(data.y[sel], d, z, self.model_, clip)
        return out

    def predict(self, X, target):
        """Counterfactual outcome of every observation in cell ``target = (d', z')``."""
        check_is_fitted(self, "model_")
        clip = self._clip()
        data = check_observations(X, self.exclusion.num_alternatives, self.exclusion.support_size)
        out = np.empty(len(data))
        for d, z in set(zip(data.d.tolist(), data.z.tolist())):
            sel = (data.d == d) & (data.z == z)
            out[sel] = counterfactual(data.y[sel], (d, z), tuple(target), self.model_, clip)
        return out

    def selection_probabilities(self):
        """``p(d | eta, z)`` on the rank grid, shape ``(grid, N_Z, J)``."""
        check_is_fitted(self, "model_")
        return self.model_.probabilities


class LinearSemiIVATE(BaseEstimator):
    """Closed-form coefficients of the additive model with two binary semi-IVs.

    ``z`` encodes ``(w0, w1)`` as 1 <-> (0,0), 2 <-> (1,0), 3 <-> (0,1),
    4 <-> (1,1) and ``d = 2`` is the treated alternative.

    Attributes
    ----------
    coef_ : ndarray
        ``(beta, delta, alpha0, alpha1)``.
    delta_ : float
        The average treatment effect.
    result_ : LinearAteResult
    """

    def fit(self, X, y=None):
        data = check_observations(X, 2, 4)
        self.result_ = estimate_linear_ate(inputs_from_dataset(data))
        self.coef_ = self.result_.coefficients
        self.delta_ = self.result_.delta
        return self

    def predict(self, X):
        """Fitted ``E[Y | D, W0, W1]`` for ``(d, z)`` rows (a third ``y`` column is ignored)."""
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=float)
        d = X[:, 0] - 1
        z = X[:, -1].astype(np.int64) - 1
        w0 = (z % 2).astype(float)
        w1 = (z // 2).astype(float)
        beta, delta, a0, a1 = self.coef_
        return beta + delta * d + a0 * (1 - d) * w0 + a1 * d * w1
