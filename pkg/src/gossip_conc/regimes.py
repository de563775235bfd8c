"""Profiles of expected final opinions: polarization, block and consensus limits.

The asymptotic conditions (``f = omega(g)``, ``f = Omega(g)``) become
finite-n ratios ``f / g``.  A little-omega condition counts as met when its
ratio reaches the user threshold, a big-Omega condition when its ratio
reaches 1.  Verdicts are advisory and always carry the raw ratios.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .analytic_solver import lambda2_laplacian, lambda_min, solve_m
from .graph_models import (DegreeSummary, RgsModel, SystemMatrices, assemble_system,
                           degree_summary, expected_graph, spectral_norm)

REGIMES = ("polarization_limit", "consensus_limit", "block_limit", "indeterminate")


class RegimeError(ValueError):
    pass


def large_influence_limit(psi_s: np.ndarray, z_s: np.ndarray) -> np.ndarray:
    """``diag(psi_s 1)^{-1} psi_s z``: each agent's stubborn-weighted average."""
    psi_s = np.asarray(psi_s, dtype=np.float64)
    w = psi_s.sum(axis=1)
    zero = np.flatnonzero(w <= 0)
    if zero.size:
        raise RegimeError(
            f"regular agent {int(zero[0])} has zero expected stubborn degree; "
            "use block_limit for models with such agents")
    return (psi_s @ np.asarray(z_s, dtype=np.float64)) / w


def block_order(psi_s: np.ndarray) -> np.ndarray:
    """Stable permutation putting agents with positive stubborn degree first."""
    pos = np.asarray(psi_s).sum(axis=1) > 0
    return np.argsort(~pos, kind="stable")


@dataclass(frozen=True, eq=False)
class BlockPartition:
    perm: np.ndarray
    n_r1: int
    m11: np.ndarray
    m12: np.ndarray
    m21: np.ndarray
    m22: np.ndarray
    psi_plus: np.ndarray


def partition(sys_star: SystemMatrices) -> BlockPartition:
    perm = block_order(sys_star.u_bar)
    n1 = int((sys_star.u_bar.sum(axis=1) > 0).sum())
    m = sys_star.m_bar[np.ix_(perm, perm)]
    return BlockPartition(perm, n1, m[:n1, :n1], m[:n1, n1:], m[n1:, :n1], m[n1:, n1:],
                          sys_star.u_bar[perm[:n1]])


def block_limit(sys_star: SystemMatrices, z_s: np.ndarray) -> np.ndarray:
    """Limit vector when some agents have no stubborn neighbors.

    Agents tied to stubborn agents take their stubborn-weighted average; the
    rest take ``M~ psi_+ z``, where ``M~`` is the lower-left block of
    ``m_bar^{-1}``, obtained from the Schur complement of the lower-right block.
    """
    z_s = np.asarray(z_s, dtype=np.float64)
    bp = partition(sys_star)
    if bp.n_r1 < 1:
        raise RegimeError("no regular agent has a stubborn neighbor")
    top = large_influence_limit(bp.psi_plus, z_s)
    out = np.empty(sys_star.n_r)
    out[bp.perm[:bp.n_r1]] = top
    if bp.n_r1 == sys_star.n_r:
        return out
    try:
        f22 = scipy.linalg.cho_factor(bp.m22, lower=True)
    except np.linalg.LinAlgError as exc:
        raise RegimeError("the block of agents without stubborn neighbors is singular") from exc
    x21 = scipy.linalg.cho_solve(f22, bp.m21)           # m22^{-1} m21
    schur = bp.m11 - bp.m12 @ x21
    inv11 = scipy.linalg.inv(schur)
    m_tilde = -x21 @ inv11
    out[bp.perm[bp.n_r1:]] = m_tilde @ (bp.psi_plus @ z_s)
    return out


def consensus_value(psi_s: np.ndarray, z_s: np.ndarray, lambda1_mstar: float, n_r: int) -> float:
    """``1' psi_s z / (n_r lambda_1(m_bar*))``."""
    if not lambda1_mstar > 0:
        raise RegimeError("the smallest eigenvalue of m_bar* must be positive")
    return float(np.asarray(psi_s).sum(axis=0) @ np.asarray(z_s, dtype=np.float64)
                 / (n_r * lambda1_mstar))


@dataclass(frozen=True)
class BlockQuantities:
    """Spectral data of the block partition used by the block-limit condition."""

    m21_norm: float
    lambda1_m22: float


def block_quantities(sys_star: SystemMatrices) -> BlockQuantities | None:
    bp = partition(sys_star)
    if bp.n_r1 == sys_star.n_r or bp.n_r1 == 0:
        return None
    return BlockQuantities(spectral_norm(bp.m21), lambda_min(bp.m22))


@dataclass
class ProfileVerdict:
    regime: str
    limit_vector: np.ndarray | None
    gamma_n: float | None
    residual: float
    diagnostics: dict
    c_M: float
    threshold: float
    met: dict = field(default_factory=dict)

    def to_dict(self, limit_vector_path: str | None = None) -> dict:
        d = {"regime": self.regime, "residual": _finite(self.residual),
             "ratios": {k: _finite(v) for k, v in self.diagnostics.items()},
             "c_M": self.c_M, "threshold": self.threshold}
        if self.gamma_n is not None:
            d["gamma_n"] = self.gamma_n
        if limit_vector_path is not None:
            d["limit_vector_path"] = limit_vector_path
        return d


def _finite(v):
    return v if isinstance(v, (int, float)) and math.isfinite(v) else None


def _ratio(num: float, den: float) -> float:
    if den > 0:
        return num / den
    return math.inf if num > 0 else 0.0


# which ratios must be met for each branch, and whether each is little-omega
BRANCHES = {
    "polarization_limit": [("xstar_large_influence", True)],
    "block_limit": [("xstar_block", True), ("xstar_block_m22", False)],
    "consensus_limit": [("xstar_consensus_lambda1", True), ("xstar_consensus_lambda2", True)],
}


def regime_diagnostics(ds: DegreeSummary, lambda1_mstar: float, lambda2_lstar: float,
                       c_M: float = 0.5, threshold: float = 10.0,
                       block: BlockQuantities | None = None) -> ProfileVerdict:
    """Finite-n ratios for every profile hypothesis and the resulting regime.

    Branches are tried in the order polarization, block, consensus.  The
    ``xg_*`` and ``entrywise`` ratios concern sampled graphs and are reported
    but do not affect the regime.
    """
    if not 0 < c_M < 1:
        raise ValueError("c_M must lie in (0, 1)")
    if not threshold > 1:
        raise ValueError("threshold must exceed 1")
    d = ds.d_rs_sr
    ln = math.log(ds.n)
    rl = math.sqrt(ds.delta_r_max * ln)
    r = {
        "xstar_large_influence": _ratio(ds.delta_rs_min, max(1.0, math.sqrt(ds.delta_rr_max * d))),
        "xstar_consensus_lambda1": _ratio(lambda1_mstar, d ** c_M),
        "xstar_consensus_lambda2": _ratio(lambda2_lstar, max(1.0, d ** (2.0 - c_M))),
        "xg_large_influence": _ratio(ds.delta_rs_min, max(ln, math.sqrt(d * max(math.sqrt(rl), ds.delta_rr_max)))),
        "xg_consensus_lambda1": _ratio(lambda1_mstar, max(d ** c_M, math.sqrt(rl), math.sqrt(math.sqrt(rl) * d))),
        "xg_consensus_lambda2": _ratio(lambda2_lstar, d ** (2.0 - c_M)),
        "entrywise": _ratio(ds.delta_rs_min, max(ln, math.sqrt(math.sqrt(rl) * d))),
    }
    if block is not None:
        lam22 = block.lambda1_m22
        lhs = block.m21_norm * math.sqrt(d / lam22) if lam22 > 0 else math.inf
        r["xstar_block"] = _ratio(ds.delta_rs_min_pos,
                                  max(lhs, math.sqrt(ds.delta_rr_max_pos * d), 1.0))
        r["xstar_block_m22"] = lam22
    met = {}
    for name, omega in (x for b in BRANCHES.values() for x in b):
        if name in r:
            met[name] = r[name] >= (threshold if omega else 1.0)
    regime = "indeterminate"
    if ds.delta_rs_max > 0:
        for b, conds in BRANCHES.items():
            if all(met.get(c, False) for c, _ in conds):
                regime = b
                break
    return ProfileVerdict(regime, None, None, math.nan, r, c_M, threshold, met)


def classify_profile(model: RgsModel, z_s: np.ndarray, x: np.ndarray | None = None,
                     c_M: float = 0.5, threshold: float = 10.0) -> ProfileVerdict:
    """Regime verdict for a model, with the limit vector and its residual.

    The residual ``||x - limit|| / ||z||`` is measured against ``x`` (the
    expected-graph opinions by default; pass sampled-graph opinions to check
    the sampled-graph statements).  For an indeterminate verdict the
    residuals of every computable limit are still reported in the ratios
    map under ``residual_*`` keys.
    """
    z_s = np.asarray(z_s, dtype=np.float64)
    sys_star = assemble_system(expected_graph(model))
    ds = degree_summary(model)
    lam1 = lambda_min(sys_star.m_bar)
    lam2 = lambda2_laplacian(sys_star.l_bar)
    v = regime_diagnostics(ds, lam1, lam2, c_M, threshold, block_quantities(sys_star))
    zn = float(np.linalg.norm(z_s))
    limits = {}
    if x is None and lam1 > 0:
        x = solve_m(sys_star.m_bar, sys_star.u_bar @ z_s)
    if ds.delta_rs_min > 0:
        limits["polarization_limit"] = large_influence_limit(model.psi_s, z_s)
    elif ds.n_r1 > 0:
        try:
            limits["block_limit"] = block_limit(sys_star, z_s)
        except RegimeError:
            pass
    if lam1 > 0:
        g = consensus_value(model.psi_s, z_s, lam1, model.n_r)
        limits["consensus_limit"] = np.full(model.n_r, g)
        v.gamma_n = g if v.regime == "consensus_limit" else None
    if x is not None and zn > 0:
        for k, lim in limits.items():
            v.diagnostics[f"residual_{k}"] = float(np.linalg.norm(x - lim) / zn)
    if v.regime in limits:
        v.limit_vector = limits[v.regime]
        v.residual = v.diagnostics.get(f"residual_{v.regime}", math.nan)
    return v
