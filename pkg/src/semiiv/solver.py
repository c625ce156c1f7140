"""Integration of ``M_Q(q) q'(eta) = 1`` from ``q(0)`` to ``q(1)``.

Away from singular points the inverted system ``q' = M_Q(q)^{-1} 1`` is
integrated with an adaptive Runge-Kutta 4(5) scheme. The normalized
determinant ``nu`` of ``M_Q`` is tracked after every step. When it heads
for zero the step size is capped, and once the predicted distance to the
zero falls under ``5 R`` (``R`` = approach radius) the zero is located on a
quadratic extrapolation of the path and handed to
:func:`~semiiv.singularity.cross_singularity`. Integration resumes a short
step ``rho`` past the singular rank along the selected branch.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.integrate import RK45
from scipy.optimize import brentq, minimize_scalar

from .density import DensityProvider, SupportBounds
from .exceptions import IdentificationError, NumericalError, SetIdentificationError, SpecificationError
from .exclusion import ExclusionMap, check_exclusion_necessary
from .path import MonotonePath
from .system import OutcomeSystem
from .singularity import cross_singularity

__all__ = ["SolverOptions", "solve_forward", "build_system"]


@dataclass
class SolverOptions:
    """Numerical settings of a solve.

    Attributes
    ----------
    rtol, atol : float
        Runge-Kutta tolerances.
    max_step : float
        Largest rank step of the integrator.
    delta_sing : float
        Singularity guard on the normalized determinant.
    approach_radius : float
        ``R``: a zero predicted within ``5 R`` triggers the crossing.
    exit_step : float
        Initial rank offset ``rho`` at which integration resumes after a
        crossing; doubled until ``|nu| > 2 delta_sing``.
    max_exit_step : float
        Largest ``rho`` tried before the zero is declared non-isolated.
    terminal_tol : float
        ``tau_end`` as a fraction of each support width.
    backward : bool
        Also sweep from ``q(1)`` down to ``q(0)``.
    rows : tuple of int, optional
        Frozen 1-based semi-IV rows of the square system.
    grid_size : int
        Points of the uniform output grid on [0, 1].
    """

    rtol: float = 1e-8
    atol: float = 1e-10
    max_step: float = 1e-2
    delta_sing: float = 1e-6
    approach_radius: float = 1e-3
    exit_step: float = 1e-4
    max_exit_step: float = 5e-2
    terminal_tol: float = 1e-3
    backward: bool = False
    rows: tuple = None
    grid_size: int = 1001

    def __post_init__(self):
        if self.grid_size < 101:
            raise SpecificationError("grid size must be at least 101")
        for name in ("rtol", "atol", "max_step", "delta_sing", "approach_radius", "exit_step"):
            if not getattr(self, name) > 0:
                raise SpecificationError(f"{name} must be positive")

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["rows"] = None if self.rows is None else list(self.rows)
        return doc


@dataclass
class _SweepResult:
    values: np.ndarray
    reached: float
    stuck: bool
    reason: str = ""
    crossings: list = field(default_factory=list)
    steps: int = 0
    nfev: int = 0
    false_alarms: int = 0


class _Sweep:
    """One directional integration over the output grid."""

    def __init__(self, sys: OutcomeSystem, grid, opt: SolverOptions, direction: int):
        self.sys = sys
        self.grid = grid
        self.opt = opt
        self.sgn = direction
        self.t_end = 1.0 if direction > 0 else 0.0
        self.values = np.full((grid.size, sys.emap.n_q), np.nan)
        self.result = _SweepResult(self.values, 0.0, False)

    # grid bookkeeping ---------------------------------------------------------

    def _between(self, a, b, include_a=False):
        """Grid indices strictly past ``a`` and up to ``b`` in sweep direction."""
        lo, hi = (a, b) if self.sgn > 0 else (b, a)
        g = self.grid
        if self.sgn > 0:
            mask = (g > lo) & (g <= hi) if not include_a else (g >= lo) & (g <= hi)
        else:
            mask = (g >= lo) & (g < hi) if not include_a else (g >= lo) & (g <= hi)
        return np.flatnonzero(mask)

    def _fill(self, idx, fn):
        for i in idx:
            self.values[i] = fn(self.grid[i])

    # integration ----------------------------------------------------------------

    def _integrator(self, t, q):
        opt = self.opt
        return RK45(
            lambda _t, y: self.sys.rhs(y),
            t,
            q,
            self.t_end,
            max_step=opt.max_step,
            rtol=opt.rtol,
            atol=opt.atol,
        )

    def run(self, t0: float, q0) -> _SweepResult:
        sys, opt, sgn, res = self.sys, self.opt, self.sgn, self.result
        delta, R = opt.delta_sing, opt.approach_radius
        q0 = np.asarray(q0, dtype=float)
        self._fill(self._between(t0, t0, include_a=True), lambda _: q0)
        t, q, nu = t0, q0, sys.nu(q0)
        if abs(nu) < delta:
            return self._stop(t0, f"system singular at the starting rank {t0:g} (|nu| = {abs(nu):.2e})")
        solver = self._integrator(t, q)
        back = None  # (t, q) of the previous accepted point, for curvature
        cooldown = None
        while solver.status == "running":
            solver.step()
            res.steps += 1
            if solver.status == "failed":
                crossing = self._cross(t, q, back, span=10 * R)
                if crossing is None:
                    raise NumericalError(f"integrator failed at eta = {t:.6f}: {solver.message}")
                if crossing == "stuck":
                    return res
                res.nfev += solver.nfev
                t, q, nu = crossing
                back, cooldown = None, None
                solver = self._integrator(t, q)
                continue
            t_new, q_new = solver.t, solver.y.copy()
            nu_new = sys.nu(q_new)
            if nu_new * nu < 0 or abs(nu_new) < delta:
                # stepped onto or over a zero: rewind and cross from the last good point
                crossing = self._cross(t, q, back, span=abs(t_new - t) * 1.05)
                if crossing is None and solver.status == "finished":
                    # the zero sits on the terminal rank itself
                    crossing = "accept"
                if crossing is None:
                    raise NumericalError(
                        f"determinant changed sign between eta = {t:.6f} and {t_new:.6f} but no zero was located"
                    )
                if crossing == "stuck":
                    return res
                if crossing != "accept":
                    res.nfev += solver.nfev
                    t, q, nu = crossing
                    back, cooldown = None, None
                    solver = self._integrator(t, q)
                    continue
            dense = solver.dense_output()
            self._fill(self._between(t, t_new), dense)
            back = (t, q)
            dt = abs(t_new - t)
            t, q = t_new, q_new
            slope = (nu_new - nu) / dt
            nu = nu_new
            if cooldown is not None and sgn * (t - cooldown) > 0:
                cooldown = None
            solver.max_step = opt.max_step
            if nu * slope < 0 and solver.status == "running":
                dist = -nu / slope
                if dist < 5 * R and cooldown is None:
                    crossing = self._cross(t, q, back, span=10 * R)
                    if crossing == "stuck":
                        return res
                    if crossing is None:
                        res.false_alarms += 1
                        cooldown = t + sgn * 10 * R
                        solver.max_step = R
                        continue
                    res.nfev += solver.nfev
                    t, q, nu = crossing
                    back = None
                    solver = self._integrator(t, q)
                    continue
                solver.max_step = float(np.clip(0.5 * dist, R, opt.max_step))
        res.nfev += solver.nfev
        res.reached = self.t_end
        self._fill(self._between(t, self.t_end, include_a=True), lambda _: q)
        return res

    def _stop(self, eta, reason):
        self.result.stuck = True
        self.result.reached = float(eta)
        self.result.reason = reason
        return self.result

    # singular points --------------------------------------------------------------

    def _cross(self, t_in, q_in, back, span):
        """Locate a zero of ``nu`` ahead of ``(t_in, q_in)`` and step past it.

        Returns ``(t, q, nu)`` to resume from, ``None`` when no zero lies
        within ``span`` (false alarm) or ``"stuck"`` when the zero is not
        isolated.
        """
        sys, opt, sgn = self.sys, self.opt, self.sgn
        delta, R = opt.delta_sing, opt.approach_radius
        span = min(span, abs(self.t_end - t_in))
        if span <= 0:
            return None
        qd = sys.rhs(q_in)
        if back is not None and t_in != back[0]:
            qdd = (qd - sys.rhs(back[1])) / (t_in - back[0])
        else:
            qdd = np.zeros_like(qd)

        def pred(s):
            return q_in + s * qd + 0.5 * s * s * qdd if sgn > 0 else q_in - s * qd + 0.5 * s * s * qdd

        def nu_at(s):
            return sys.nu(pred(s))

        s_grid = np.linspace(0.0, span, 41)
        nus = np.array([nu_at(s) for s in s_grid])
        change = np.flatnonzero(nus[:-1] * nus[1:] <= 0)
        if change.size:
            i = change[0]
            if nus[i] == 0.0:
                s_star = s_grid[i]
            elif nus[i + 1] == 0.0:
                s_star = s_grid[i + 1]
            else:
                s_star = brentq(nu_at, s_grid[i], s_grid[i + 1], xtol=1e-15, rtol=4 * np.finfo(float).eps)
        else:
            i = int(np.argmin(np.abs(nus)))
            lo, hi = s_grid[max(i - 1, 0)], s_grid[min(i + 1, s_grid.size - 1)]
            fit = minimize_scalar(lambda s: abs(nu_at(s)), bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
            if fit.fun >= delta:
                return None
            s_star = float(fit.x)
        eta_star = t_in + sgn * s_star
        # the continued path is pinned down by the regular integration until eta*
        cert = cross_singularity(sys, pred(s_star), eta_star, sgn)
        q_star, w = cert.q_star, cert.direction

        def taylor(eta):
            h = eta - eta_star
            return q_star + h * w + 0.5 * h * h * qdd

        self._fill(self._between(t_in, eta_star), lambda eta: pred(abs(eta - t_in)))
        rho = opt.exit_step
        while True:
            if rho >= abs(self.t_end - eta_star):
                # the singularity sits within rho of the end: finish on the local expansion
                self._fill(self._between(eta_star, self.t_end), taylor)
                cert.exit_step, cert.exit_nu = float(abs(self.t_end - eta_star)), float("nan")
                self.result.crossings.append(cert)
                return self.t_end, taylor(self.t_end), sys.nu(taylor(self.t_end))
            t_exit = eta_star + sgn * rho
            q_exit = taylor(t_exit)
            nu_exit = sys.nu(q_exit)
            if abs(nu_exit) > 2 * delta:
                break
            rho *= 2
            if rho > opt.max_exit_step:
                self._stop(
                    eta_star,
                    f"determinant stays below {2 * delta:g} for {opt.max_exit_step:g} past eta = {eta_star:.6f}",
                )
                return "stuck"
        cert.exit_step, cert.exit_nu = float(rho), float(nu_exit)
        self.result.crossings.append(cert)
        self._fill(self._between(eta_star, t_exit), taylor)
        return t_exit, q_exit, nu_exit


def build_system(emap: ExclusionMap, density: DensityProvider, rows=None):
    """Square system with frozen rows; returns ``(system, n_passing_subsets)``.

    ``rows`` are 1-based. When omitted and ``N_Z > N_Q`` the rows are
    chosen at ``eta = 0.5`` from the selection probabilities if the density
    is analytic, otherwise at the midpoint of the supports.
    """
    if rows is not None:
        return OutcomeSystem(emap, density, tuple(int(r) - 1 for r in rows)), 1
    return OutcomeSystem.auto_rows(emap, density, getattr(density, "dgp", None))


def solve_forward(
    bounds: SupportBounds,
    emap: ExclusionMap,
    density: DensityProvider,
    options: SolverOptions = None,
) -> MonotonePath:
    """Recover the unique outcome functions on a uniform rank grid.

    Parameters
    ----------
    bounds : SupportBounds
        ``q(0)`` anchors the forward sweep, ``q(1)`` the backward one.
    emap : ExclusionMap
    density : DensityProvider
    options : SolverOptions, optional

    Returns
    -------
    MonotonePath
        ``metadata`` carries the crossing certificates, terminal gaps, the
        forward/backward gap and integration counts.

    Raises
    ------
    IdentificationError
        Chi fails the necessary rank condition.
    SetIdentificationError
        The determinant vanishes on an interval; ``exc.path`` holds the
        partial path with NaN rows on the unidentified ranks.
    RankDeficiencyError
        A singular point has rank deficiency two or more.
    """
    opt = options or SolverOptions()
    validity = check_exclusion_necessary(emap)
    if not validity.valid:
        failed = "; ".join(c.message for c in validity.checks if not c.passed)
        raise IdentificationError(f"exclusion restrictions fail the necessary rank condition: {failed}")
    lo, hi = np.asarray(bounds.lo, dtype=float), np.asarray(bounds.hi, dtype=float)
    if not np.all(lo < hi):
        raise SpecificationError("support bounds must satisfy lo < hi")
    sys, passing = build_system(emap, density, opt.rows)
    grid = np.linspace(0.0, 1.0, opt.grid_size)
    labels = emap.labels()

    fwd = _Sweep(sys, grid, opt, +1).run(0.0, lo)
    if fwd.stuck:
        bwd = _Sweep(sys, grid, opt, -1).run(1.0, hi)
        values = np.full_like(fwd.values, np.nan)
        upto = grid <= fwd.reached
        values[upto] = fwd.values[upto]
        eta_b = bwd.reached if bwd.stuck else fwd.reached
        past = grid >= eta_b
        values[past] = bwd.values[past]
        path = MonotonePath(
            grid,
            values,
            labels,
            {
                "status": "set-identified",
                "unidentified_interval": [fwd.reached, eta_b],
                "forward_reason": fwd.reason,
                "backward_reason": bwd.reason,
                "rows": [r + 1 for r in sys.rows],
            },
        )
        raise SetIdentificationError(
            f"relevance fails on an interval: ranks in [{fwd.reached:.6f}, {eta_b:.6f}] are only set identified"
            f" ({fwd.reason})",
            path=path,
            interval=(fwd.reached, eta_b),
        )

    values = fwd.values
    tol = opt.terminal_tol * (hi - lo)
    gap = np.abs(values[-1] - hi)
    worst = int(np.argmax(gap / tol))
    metadata = {
        "status": "solved",
        "rows": [r + 1 for r in sys.rows],
        "overidentified": bool(emap.n_z > emap.n_q and passing >= 2),
        "crossings": [c.to_dict() for c in fwd.crossings],
        "certificates": fwd.crossings,
        "terminal_gap": gap.tolist(),
        "terminal_tol": tol.tolist(),
        "terminal_ok": bool(np.all(gap <= tol)),
        "worst_terminal_component": f"q_{labels[worst][0]}_{labels[worst][1]}",
        "monotone": None,
        "steps": fwd.steps,
        "nfev": fwd.nfev,
        "false_alarms": fwd.false_alarms,
        "options": opt.to_dict(),
        "density_mode": density.mode,
    }
    if opt.backward:
        bwd = _Sweep(sys, grid, opt, -1).run(1.0, hi)
        metadata["backward_values"] = bwd.values
        metadata["backward_crossings"] = [c.to_dict() for c in bwd.crossings]
        if bwd.stuck:
            metadata["backward_gap"] = float("nan")
            metadata["backward_reason"] = bwd.reason
        else:
            metadata["backward_gap"] = float(np.max(np.abs(bwd.values - values)))
    path = MonotonePath(grid, values, labels, metadata)
    metadata["monotone"] = path.is_monotone()
    return path
