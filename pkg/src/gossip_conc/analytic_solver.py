"""Expected update matrices, expected final opinions and spectral quantities.

The stationary mean of the gossip process solves ``m_bar x = u_bar z``; the
``2 alpha`` normalization of the one-step update cancels, so the system is
solved directly by a Cholesky factorization (or by preconditioned conjugate
gradients for very large systems).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .graph_models import SystemMatrices, component_report

DENSE_LIMIT = 10_000
PIVOT_RTOL = 1e-12
CG_RTOL = 1e-10


class SingularSystemError(np.linalg.LinAlgError):
    """``m_bar`` is singular: some regular agents never hear a stubborn agent."""

    def __init__(self, msg: str, component: np.ndarray | None = None):
        super().__init__(msg)
        self.component = component


class EmptyGraphError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ExpectedUpdate:
    """``E{X(t+1) | X(t)} = q_bar X(t) + r_bar z``."""

    q_bar: np.ndarray
    r_bar: np.ndarray
    alpha: float


@dataclass(frozen=True, eq=False)
class OpinionSolution:
    x: np.ndarray
    lambda_min_m: float
    solver_residual: float
    kind: str
    alpha: float = float("nan")

    @property
    def rho_qbar(self) -> float:
        return 1.0 - self.lambda_min_m / (2.0 * self.alpha)

    def diagnostics(self) -> dict:
        return {"lambda_min_m": self.lambda_min_m, "rho_qbar": self.rho_qbar,
                "residual": self.solver_residual, "alpha": self.alpha}


def build_expected_update(sys: SystemMatrices) -> ExpectedUpdate:
    if sys.alpha <= 0:
        raise EmptyGraphError("the graph has no edges, the update is undefined")
    two_a = 2.0 * sys.alpha
    q = np.eye(sys.n_r) - sys.m_bar / two_a
    return ExpectedUpdate(q, sys.u_bar / two_a, sys.alpha)


def _check_symmetric(m: np.ndarray) -> None:
    if m.ndim != 2 or m.shape[0] != m.shape[1] or not np.allclose(m, m.T, rtol=0, atol=1e-12 * max(1.0, np.abs(m).max(initial=0))):
        raise ValueError("matrix must be square and symmetric")


def check_grounded(sys: SystemMatrices) -> None:
    """Raise if a connected component of regular agents has no stubborn neighbor."""
    adj = sp.csr_matrix(np.hstack([-(sys.m_bar - np.diag(np.diag(sys.m_bar))), sys.u_bar]))
    adj = sp.vstack([adj, sp.csr_matrix((sys.n_s, sys.n_r + sys.n_s))])
    for comp in component_report(adj, sys.n_r):
        if not comp["touches_stubborn"]:
            a = comp["agents"]
            shown = ", ".join(map(str, a[:10])) + (", ..." if a.size > 10 else "")
            raise SingularSystemError(
                f"component {comp['component']} (regular agents {shown}) has zero "
                "stubborn degree, so m_bar is singular", a)


def factorize(m_bar: np.ndarray):
    """Cholesky factor of ``m_bar`` with a relative pivot threshold."""
    try:
        c, low = scipy.linalg.cho_factor(m_bar, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(f"m_bar is not positive definite: {exc}") from exc
    piv = np.diag(c) ** 2
    if piv.min() < PIVOT_RTOL * np.diag(m_bar).max():
        raise SingularSystemError(
            f"Cholesky pivot {piv.min():.3g} below threshold, m_bar is numerically singular")
    return c, low


def solve_m(m_bar: np.ndarray, rhs: np.ndarray, factor=None) -> np.ndarray:
    if factor is None:
        factor = factorize(m_bar)
    return scipy.linalg.cho_solve(factor, rhs, check_finite=False)


def lambda_min(m: np.ndarray) -> float:
    """Smallest eigenvalue of a symmetric matrix."""
    _check_symmetric(m)
    if m.shape[0] == 0:
        return float("nan")
    return float(scipy.linalg.eigh(m, eigvals_only=True, subset_by_index=[0, 0],
                                   check_finite=False)[0])


def lambda2_laplacian(l: np.ndarray) -> float:
    """Algebraic connectivity (second-smallest Laplacian eigenvalue)."""
    _check_symmetric(l)
    if l.shape[0] < 2:
        return 0.0
    w = scipy.linalg.eigh(l, eigvals_only=True, subset_by_index=[0, 1], check_finite=False)
    return float(max(w[1], 0.0))


def spectral_radius_qbar(upd: ExpectedUpdate) -> float:
    """``rho(q_bar)``; ``q_bar`` is symmetric and PSD, so this is its top eigenvalue."""
    _check_symmetric(upd.q_bar)
    n = upd.q_bar.shape[0]
    return float(scipy.linalg.eigh(upd.q_bar, eigvals_only=True, subset_by_index=[n - 1, n - 1],
                                   check_finite=False)[0])


def expected_final_opinions(sys: SystemMatrices, z_s: np.ndarray,
                            spectrum: bool = True) -> OpinionSolution:
    """Solve ``m_bar x = u_bar z``.

    ``spectrum=False`` skips the eigenvalue diagnostic, which dominates the
    cost for large systems; ``lambda_min_m`` is then NaN.
    """
    z_s = np.asarray(z_s, dtype=np.float64)
    if z_s.shape != (sys.n_s,):
        raise ValueError(f"z_s must have length {sys.n_s}")
    check_grounded(sys)
    b = sys.u_bar @ z_s
    if sys.n_r <= DENSE_LIMIT:
        x = solve_m(sys.m_bar, b)
    else:
        a = sp.csr_matrix(sys.m_bar)
        pre = sp.diags(1.0 / a.diagonal())
        x, info = spla.cg(a, b, rtol=CG_RTOL, atol=0.0, M=pre, maxiter=10 * sys.n_r)
        if info != 0:
            raise SingularSystemError(f"conjugate gradients did not converge (info={info})")
    nb = np.linalg.norm(b)
    res = float(np.linalg.norm(sys.m_bar @ x - b) / nb) if nb > 0 else float(np.linalg.norm(sys.m_bar @ x))
    lam = lambda_min(sys.m_bar) if spectrum else float("nan")
    return OpinionSolution(x, lam, res, sys.kind, sys.alpha)


def solution_operator(sys: SystemMatrices) -> np.ndarray:
    """``m_bar^{-1} u_bar``, row-stochastic whenever ``m_bar`` is nonsingular."""
    check_grounded(sys)
    return solve_m(sys.m_bar, sys.u_bar)


def empirical_deviation(sys_g: SystemMatrices, sys_star: SystemMatrices) -> float:
    """Spectral norm of the difference between the two solution operators."""
    d = solution_operator(sys_g) - solution_operator(sys_star)
    if d.size == 0:
        return 0.0
    return float(scipy.linalg.svdvals(d, check_finite=False)[0])
