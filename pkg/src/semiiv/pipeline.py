"""End-to-end runs shared by the estimator classes and the command line."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .density import DensityProvider, analytic_density, empirical_density, support_bounds
from .dgp import Dataset, DgpSpec
from .exceptions import IdentificationError, SemiIVError, SetIdentificationError, SpecificationError
from .exclusion import ExclusionMap, ExclusionSpec, build_exclusion_map, check_exclusion_necessary
from .inference import recover_selection_probs
from .relevance import relevance_profile
from .report import compile_report
from .solver import SolverOptions, solve_forward

__all__ = ["RunArtifacts", "run_solve"]

log = logging.getLogger(__name__)


@dataclass
class RunArtifacts:
    """Everything a solve produced; ``error`` is set when it stopped early."""

    emap: ExclusionMap
    density: DensityProvider
    validity: object
    bounds: object = None
    relevance: object = None
    path: object = None
    recovered: object = None
    report: object = None
    error: Exception = None


def run_solve(
    source,
    exclusion: ExclusionSpec = None,
    options: SolverOptions = None,
    bandwidth="silverman",
    recover: bool = True,
) -> RunArtifacts:
    """Validate, profile, solve and (optionally) recover probabilities.

    Parameters
    ----------
    source : DgpSpec or Dataset
        A DGP selects analytic densities, a dataset empirical ones.
    exclusion : ExclusionSpec, optional
        Required with a dataset; taken from the DGP otherwise.
    options : SolverOptions, optional
    bandwidth : str
        Bandwidth policy for empirical densities.
    recover : bool
        Also recover selection probabilities from the solved path.

    Returns
    -------
    RunArtifacts
        Failures of the package's own error classes are caught and stored
        on ``error``; the report always exists.
    """
    opt = options or SolverOptions()
    if isinstance(source, DgpSpec):
        spec = source.exclusion
    elif isinstance(source, Dataset):
        if exclusion is None:
            raise SpecificationError("empirical mode needs the exclusion restrictions")
        spec = exclusion
    else:
        raise TypeError("source must be a DgpSpec or a Dataset")
    emap = build_exclusion_map(spec)
    validity = check_exclusion_necessary(emap)
    art = RunArtifacts(emap=emap, density=None, validity=validity)
    try:
        if not validity.valid:
            failed = "; ".join(c.message for c in validity.checks if not c.passed)
            raise IdentificationError(f"exclusion restrictions fail the necessary rank condition: {failed}")
        if isinstance(source, DgpSpec):
            art.density = analytic_density(source)
        else:
            art.density = empirical_density(source, emap, bandwidth)
        art.bounds = support_bounds(art.density, emap)
        for msg in art.bounds.warnings:
            log.warning("%s", msg)
        if isinstance(source, DgpSpec):
            rows = None if opt.rows is None else [r - 1 for r in opt.rows]
            art.relevance = relevance_profile(emap, source, grid=_grid(opt), rows=rows)
        try:
            art.path = solve_forward(art.bounds, emap, art.density, opt)
        except SetIdentificationError as exc:
            art.path = exc.path
            raise
        if art.relevance is None:
            rows = [r - 1 for r in art.path.metadata["rows"]]
            art.relevance = relevance_profile(emap, art.path, grid=art.path.grid, density=art.density, rows=rows)
        if recover:
            art.recovered = recover_selection_probs(art.path, emap, art.density)
    except SemiIVError as exc:
        art.error = exc
        log.info("run stopped: %s: %s", type(exc).__name__, exc)
    solved = art.path if art.error is None else None
    art.report = compile_report(
        validity,
        emap=emap,
        relevance=art.relevance,
        path=solved,
        density=art.density,
        bounds=art.bounds,
        recovered=art.recovered,
        error=art.error,
        mode=getattr(art.density, "mode", "analytic" if isinstance(source, DgpSpec) else "empirical"),
    )
    return art


def _grid(opt: SolverOptions):
    return np.linspace(0.0, 1.0, opt.grid_size)
