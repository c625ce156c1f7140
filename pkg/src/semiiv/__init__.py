"""Semi-IV identification of discrete-choice models with continuous outcomes.

The workflow is: describe which ``(d, z)`` cells share an outcome function
(:class:`ExclusionSpec`), check the necessary rank condition, build the
joint densities of ``(D, Y)`` given ``Z`` (analytically from a
:class:`DgpSpec` or by kernel estimation from a :class:`Dataset`), solve
for the outcome functions and read off selection probabilities,
counterfactuals and treatment effects.
"""

from .ate_linear import (
    LinearAteInputs,
    LinearAteResult,
    ate_weighted_formula,
    build_a_matrix,
    estimate_linear_ate,
    inputs_from_dataset,
    inputs_from_dgp,
    odds_ratio_gap,
)
from .density import (
    AnalyticDensity,
    DensityProvider,
    EmpiricalDensity,
    SupportBounds,
    analytic_density,
    empirical_density,
    export_density_lattice,
    support_bounds,
)
from .dgp import Dataset, DgpSpec, LogitSelection, OutcomeFunction, analytic_truth, draw_sample
from .estimator import LinearSemiIVATE, SemiIVEstimator, check_observations
from .exceptions import (
    BranchSelectionError,
    DataError,
    DataInsufficiencyError,
    DomainError,
    IdentificationError,
    NumericalError,
    RankDeficiencyError,
    SemiIVError,
    SetIdentificationError,
    SpecificationError,
    WeakRelevanceError,
)
from .exclusion import (
    ExclusionMap,
    ExclusionSpec,
    ValidityReport,
    build_exclusion_map,
    check_exclusion_necessary,
)
from .inference import (
    EffectsTable,
    RecoveredModel,
    counterfactual,
    rank_of,
    recover_selection_probs,
    treatment_effects,
)
from .path import MonotonePath
from .pipeline import RunArtifacts, run_solve
from .relevance import RelevanceProfile, relevance_profile
from .report import RunReport, compile_report
from .singularity import SingularityCertificate, cross_singularity
from .solver import SolverOptions, solve_forward
from .system import assemble_m, assemble_m_tilde, desingularized_field

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
