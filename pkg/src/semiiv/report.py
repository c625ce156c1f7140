"""One machine-readable summary of every check made during a run."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .exceptions import SemiIVError
from .exclusion import ExclusionMap, ValidityReport
from .path import MonotonePath
from .relevance import RelevanceProfile
from .system import identity_residual

__all__ = ["RunReport", "compile_report", "TOLERANCES"]

TOLERANCES = {
    "analytic": {
        "residual": 1e-4,
        "terminal_rel": 1e-3,
        "backward_gap": 1e-6,
        "backward_gap_crossing": 1e-3,
        "g_norm": 1e-6,
        "trace": 1e-6,
        "third_singular_ratio": 1e-6,
        "probability_row_sum": 1e-3,
    },
    "empirical": {
        "residual": 1e-3,
        "terminal_rel": 1e-2,
        "backward_gap": 1e-2,
        "backward_gap_crossing": 5e-2,
        "g_norm": 1e-6,
        "trace": 1e-6,
        "third_singular_ratio": 1e-6,
        "probability_row_sum": 5e-2,
    },
}


def _clean(obj):
    """Make ``obj`` JSON-ready with plain Python scalars."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    return obj


@dataclass
class RunReport:
    """Aggregated diagnostics; ``verdict`` is ``"pass"`` only if every check passes."""

    verdict: str
    checks: list
    exclusion: dict
    relevance: dict = None
    residual_max: list = None
    endpoint_gaps: dict = None
    certificates: list = field(default_factory=list)
    backward_gap: float = None
    monotone: bool = None
    probability_row_sum_deviation: float = None
    support: dict = None
    error: dict = None
    tolerances: dict = field(default_factory=dict)
    mode: str = "analytic"

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    @property
    def exit_code(self) -> int:
        if self.passed:
            return 0
        if self.error is not None:
            return int(self.error["exit_code"])
        if self.relevance is not None and self.relevance.get("verdict") in ("interval-degenerate", "rank-deficient"):
            return 4
        if not self.exclusion.get("valid", True):
            return 4
        return 5

    def to_dict(self) -> dict:
        return _clean(
            {
                "verdict": self.verdict,
                "mode": self.mode,
                "checks": self.checks,
                "exclusion": self.exclusion,
                "relevance": self.relevance,
                "residual_max": self.residual_max,
                "endpoint_gaps": self.endpoint_gaps,
                "certificates": self.certificates,
                "backward_gap": self.backward_gap,
                "monotone": self.monotone,
                "probability_row_sum_deviation": self.probability_row_sum_deviation,
                "support": self.support,
                "error": self.error,
                "tolerances": self.tolerances,
            }
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def write(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json())

    def render_text(self) -> str:
        lines = [f"verdict: {self.verdict.upper()} ({self.mode} densities)"]
        if self.error is not None:
            lines.append(f"error: {self.error['type']}: {self.error['message']}")
        for c in self.checks:
            value = "" if c["value"] is None else f" value={c['value']:.3g}"
            tol = "" if c["tolerance"] is None else f" tol={c['tolerance']:.3g}"
            lines.append(f"  [{'pass' if c['passed'] else 'FAIL'}] {c['name']}{value}{tol}")
        if self.relevance is not None:
            sing = ", ".join(f"{s['eta']:.6f} (deficiency {s['deficiency']})" for s in self.relevance["singularities"])
            lines.append(f"relevance: {self.relevance['verdict']}" + (f"; singular at {sing}" if sing else ""))
        for i, cert in enumerate(self.certificates, start=1):
            lines.append(
                f"crossing {i}: eta*={cert['eta']:.6f} |g|={cert['g_norm']:.2e} trace={cert['trace']:.2e}"
                f" eigenvalues={[round(v, 6) for v in cert['eigenvalues']]} branch={cert['branch_sign']}"
            )
        return "\n".join(lines) + "\n"


def _check(name, value, tol, passed=None):
    if passed is None:
        passed = value is not None and np.isfinite(value) and value <= tol
    return {"name": name, "passed": bool(passed), "value": value, "tolerance": tol}


def compile_report(
    validity: ValidityReport,
    emap: ExclusionMap = None,
    relevance: RelevanceProfile = None,
    path: MonotonePath = None,
    density=None,
    bounds=None,
    recovered=None,
    error: Exception = None,
    mode: str = None,
) -> RunReport:
    """Aggregate run artifacts into a :class:`RunReport`.

    Parameters
    ----------
    validity : ValidityReport
        Exclusion check; always present.
    emap, density : optional
        Needed to evaluate the identity residual on ``path``.
    relevance : RelevanceProfile, optional
    path : MonotonePath, optional
        Solved (or partial) path; its metadata supplies certificates,
        terminal gaps and the forward/backward gap.
    bounds : SupportBounds, optional
    recovered : RecoveredModel, optional
        Adds the probability row-sum check.
    error : Exception, optional
        A failure raised during the run.
    mode : {"analytic", "empirical"}, optional
        Selects the tolerance table; taken from ``density`` when omitted.
    """
    if mode is None:
        mode = getattr(density, "mode", "analytic")
    tol = TOLERANCES["empirical" if mode == "empirical" else "analytic"]
    checks = [_check("exclusion_necessary_condition", None, None, validity.valid)]
    rep = RunReport(
        verdict="fail",
        checks=checks,
        exclusion=validity.to_dict(),
        tolerances=dict(tol),
        mode=mode,
    )
    if relevance is not None:
        rep.relevance = relevance.summary()
        checks.append(
            _check(
                "relevance",
                None,
                None,
                relevance.verdict in ("identified", "isolated-singularities"),
            )
        )
    if bounds is not None:
        rep.support = bounds.to_dict()
        checks.append(_check("support_compatibility", None, None, not bounds.warnings))
    if path is not None:
        meta = path.metadata
        if emap is not None and density is not None:
            res = identity_residual(path.grid, path.values, emap, density)
            rmax = [float(np.nanmax(np.abs(res[:, z]))) if np.any(np.isfinite(res[:, z])) else None for z in range(emap.n_z)]
            rep.residual_max = rmax
            finite = [v for v in rmax if v is not None]
            checks.append(_check("identity_residual", max(finite) if finite else None, tol["residual"]))
        if "terminal_gap" in meta:
            gaps = np.asarray(meta["terminal_gap"], dtype=float)
            widths = np.asarray(meta["terminal_tol"], dtype=float) / meta["options"]["terminal_tol"]
            rel = gaps / widths
            rep.endpoint_gaps = {
                "start": [0.0] * gaps.size,
                "end": gaps.tolist(),
                "end_relative": rel.tolist(),
                "worst_component": meta.get("worst_terminal_component"),
            }
            checks.append(_check("terminal_gap_relative", float(rel.max()), tol["terminal_rel"]))
        rep.monotone = path.is_monotone()
        checks.append(_check("monotone", None, None, rep.monotone))
        certs = meta.get("crossings", [])
        rep.certificates = list(certs)
        for i, cert in enumerate(certs, start=1):
            checks.append(_check(f"crossing_{i}_g_norm", cert["g_norm"], tol["g_norm"]))
            checks.append(_check(f"crossing_{i}_trace", abs(cert["trace"]), tol["trace"]))
            checks.append(
                _check(f"crossing_{i}_rank_le_2", cert["third_singular_ratio"], tol["third_singular_ratio"])
            )
            checks.append(_check(f"crossing_{i}_opposite_eigenvalues", None, None, cert["eigenvalues_opposite_sign"]))
            checks.append(_check(f"crossing_{i}_kernel_not_one_signed", None, None, not cert["kernel_one_signed"]))
        if "backward_gap" in meta:
            rep.backward_gap = meta["backward_gap"]
            limit = tol["backward_gap_crossing"] if certs else tol["backward_gap"]
            checks.append(_check("forward_backward_gap", meta["backward_gap"], limit))
    if recovered is not None:
        rep.probability_row_sum_deviation = recovered.row_sum_deviation
        checks.append(_check("probability_row_sum", recovered.row_sum_deviation, tol["probability_row_sum"]))
    if error is not None:
        rep.error = {
            "type": type(error).__name__,
            "message": str(error),
            "exit_code": getattr(error, "exit_code", 1) if isinstance(error, SemiIVError) else 1,
        }
        if getattr(error, "interval", None) is not None:
            rep.error["interval"] = list(error.interval)
        if getattr(error, "eta", None) is not None:
            rep.error["eta"] = error.eta
        checks.append(_check("run_completed", None, None, False))
    if path is None and error is None:
        checks.append(_check("path_available", None, None, False))
    rep.verdict = "pass" if all(c["passed"] for c in checks) else "fail"
    return rep
