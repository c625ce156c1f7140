"""Crossing isolated rank-one singularities of ``M(q) q' = 1``.

Near a point where ``det M`` vanishes the inverted system blows up, but the
desingularized field ``g(q) = adj(M(q)) 1`` stays smooth and its
trajectories coincide with those of the original system. The true path
passes through an equilibrium ``q*`` of ``g``. There the Jacobian ``g'`` has
rank at most two, zero trace (``g_i`` never depends on ``q_i``) and two real
eigenvalues of opposite sign, i.e. ``q*`` is a saddle with two candidate
trajectories. Only one of them has a one-signed direction, and that is the
strictly increasing continuation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import BranchSelectionError, NumericalError, RankDeficiencyError
from .system import OutcomeSystem

__all__ = ["SingularityCertificate", "locate_equilibrium", "field_jacobian", "cross_singularity"]

_FD_STEP_NEWTON = 1e-6
_FD_STEP_JACOBIAN = 1e-5


@dataclass
class SingularityCertificate:
    """Raw numbers behind one crossing, re-checkable after the fact."""

    eta: float
    q_star: np.ndarray
    direction: np.ndarray
    g_norm: float
    trace: float
    eigenvalues: np.ndarray
    jacobian_singular_values: np.ndarray
    matrix_singular_values: np.ndarray
    kernel_vector: np.ndarray
    branch_sign: np.ndarray
    deficiency: int
    newton_iterations: int
    exit_step: float = float("nan")
    exit_nu: float = float("nan")

    @property
    def opposite_signs(self) -> bool:
        lam = np.real(self.eigenvalues)
        return bool(lam.size == 2 and lam[0] * lam[1] < 0)

    @property
    def third_singular_ratio(self) -> float:
        s = self.jacobian_singular_values
        return float(s[2] / s[0]) if s.size > 2 and s[0] > 0 else 0.0

    @property
    def kernel_one_signed(self) -> bool:
        v = self.kernel_vector
        tol = 1e-10 * np.max(np.abs(v))
        return bool(np.all(v > tol) or np.all(v < -tol))

    def to_dict(self) -> dict:
        return {
            "eta": float(self.eta),
            "q_star": self.q_star.tolist(),
            "direction": self.direction.tolist(),
            "g_norm": float(self.g_norm),
            "trace": float(self.trace),
            "eigenvalues": [float(v) for v in np.real(self.eigenvalues)],
            "eigenvalues_opposite_sign": self.opposite_signs,
            "jacobian_singular_values": self.jacobian_singular_values.tolist(),
            "third_singular_ratio": self.third_singular_ratio,
            "matrix_singular_values": self.matrix_singular_values.tolist(),
            "kernel_vector": self.kernel_vector.tolist(),
            "kernel_one_signed": self.kernel_one_signed,
            "branch_sign": [int(s) for s in self.branch_sign],
            "deficiency": int(self.deficiency),
            "newton_iterations": int(self.newton_iterations),
            "exit_step": float(self.exit_step),
            "exit_normalized_det": float(self.exit_nu),
        }


def field_jacobian(sys: OutcomeSystem, q, h: float = _FD_STEP_JACOBIAN) -> np.ndarray:
    """Central-difference Jacobian of ``g`` at ``q``; ``h`` is relative to the support widths."""
    q = np.asarray(q, dtype=float)
    n = q.size
    jac = np.empty((n, n))
    for k in range(n):
        e = np.zeros(n)
        e[k] = h * sys.width[k]
        jac[:, k] = (sys.field(q + e) - sys.field(q - e)) / (2 * e[k])
    return jac


def locate_equilibrium(sys: OutcomeSystem, q0, max_iter: int = 40):
    """Damped Gauss-Newton on ``g(q) = 0`` started at ``q0``.

    The equilibrium set is a manifold of codimension two, so each step is
    the minimum-norm least-squares correction, which lands on the
    equilibrium nearest to the start.

    Returns
    -------
    q : ndarray
    iterations : int
    """
    q = np.asarray(q0, dtype=float).copy()
    g = sys.field(q)
    gn = np.linalg.norm(g)
    scale = float(np.max(sys.width))
    for it in range(1, max_iter + 1):
        jac = field_jacobian(sys, q, _FD_STEP_NEWTON)
        step = np.linalg.lstsq(jac, -g, rcond=1e-8)[0]
        lam = 1.0
        while lam > 1e-4:
            trial = q + lam * step
            g_trial = sys.field(trial)
            if np.linalg.norm(g_trial) < gn or gn == 0.0:
                break
            lam *= 0.5
        else:
            return q, it
        q, g = trial, g_trial
        gn = np.linalg.norm(g)
        if lam * np.linalg.norm(step) < 1e-14 * scale or gn < 1e-16:
            return q, it
    return q, max_iter


def _matrix_svd(m):
    norms = np.linalg.norm(m, axis=1)
    norms[norms == 0] = 1.0
    _, s, vt = np.linalg.svd(m / norms[:, None])
    return s, vt[-1]


def _check_deficiency(s, eta, where):
    if s.size >= 2 and (s[-2] < 10 * s[-1] or s[-2] < 1e-4 * s[0]):
        raise RankDeficiencyError(
            f"rank drops by two or more near eta = {eta:.6f} ({where}); singular values {np.array2string(s, precision=3)}",
            eta=float(eta),
            singular_values=s,
        )


def cross_singularity(sys: OutcomeSystem, q_guess, eta: float, direction_sign: int = 1):
    """Analyse the singular point near ``q_guess`` and choose the increasing branch.

    Parameters
    ----------
    sys : OutcomeSystem
    q_guess : array_like
        Path state extrapolated to the estimated singular rank ``eta``.
    eta : float
        Estimated rank of the singularity.
    direction_sign : int
        +1 for a forward sweep, -1 for a backward sweep (only recorded).

    Returns
    -------
    SingularityCertificate
        ``q_star`` and the unit-speed tangent ``direction`` (``M direction ≈ 1``)
        of the increasing branch.

    Raises
    ------
    RankDeficiencyError
        Two or more singular values of ``M`` vanish together.
    BranchSelectionError
        Neither nonzero-eigenvalue direction of ``g'`` is one-signed.
    """
    s_guess, _ = _matrix_svd(sys.m(q_guess))
    _check_deficiency(s_guess, eta, "before refinement")
    q_star, iters = locate_equilibrium(sys, q_guess)
    m_star = sys.m(q_star)
    s_mat, kernel = _matrix_svd(m_star)
    _check_deficiency(s_mat, eta, "at the equilibrium")
    g_norm = float(np.linalg.norm(sys.field(q_star)))
    jac = field_jacobian(sys, q_star)
    s_jac = np.linalg.svd(jac, compute_uv=False)
    lam, vecs = np.linalg.eig(jac)
    order = np.argsort(-np.abs(lam))
    n_keep = min(2, lam.size)
    lam = lam[order[:n_keep]]
    vecs = vecs[:, order[:n_keep]]
    if np.any(np.abs(np.imag(lam)) > 1e-8 * np.max(np.abs(lam))):
        raise BranchSelectionError(
            f"complex eigenvalues of the field Jacobian at eta = {eta:.6f}",
            eigenvalues=lam,
            eigenvectors=vecs,
        )
    lam = np.real(lam)
    vecs = np.real(vecs)
    candidates = []
    for k in range(n_keep):
        v = vecs[:, k] / np.max(np.abs(vecs[:, k]))
        tol = 1e-8
        if np.all(v > tol) or np.all(v < -tol):
            candidates.append(k)
    if len(candidates) != 1:
        raise BranchSelectionError(
            f"{'no' if not candidates else 'more than one'} one-signed eigen-direction at eta = {eta:.6f}",
            eigenvalues=lam,
            eigenvectors=vecs,
        )
    v = vecs[:, candidates[0]]
    mv = m_star @ v
    a = float(mv @ sys.V) / float(mv @ mv)
    w = a * v
    if not np.all(w > 0):
        raise BranchSelectionError(
            f"selected branch is not increasing at eta = {eta:.6f}", eigenvalues=lam, eigenvectors=vecs
        )
    if not np.all(np.isfinite(q_star)):
        raise NumericalError(f"equilibrium search diverged near eta = {eta:.6f}")
    return SingularityCertificate(
        eta=float(eta),
        q_star=q_star,
        direction=w,
        g_norm=g_norm,
        trace=float(np.trace(jac)),
        eigenvalues=lam,
        jacobian_singular_values=s_jac,
        matrix_singular_values=s_mat,
        kernel_vector=kernel,
        branch_sign=np.sign(v * np.sign(a)).astype(int),
        deficiency=int(np.sum(s_mat <= 1e-5 * s_mat[0])) or 1,
        newton_iterations=iters,
    )
