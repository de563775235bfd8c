"""Closed-form concentration bounds for expected and time-averaged opinions.

Every bound is evaluated regardless of whether its hypotheses hold; the
result carries a ``holds`` flag so a caller can see how far a configuration
is from the regime where the guarantee applies.  ``log`` is the natural
logarithm throughout.

Two cases are distinguished:

* ``stubborn_min_degree``: every regular agent expects many stubborn
  neighbors (``delta_rs > 8 log n``);
* ``spectral``: the smallest eigenvalue of the expected ``m_bar`` dominates
  ``4 sqrt(Delta_r log n)``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from .graph_models import DegreeSummary

CASES = ("stubborn_min_degree", "spectral")


class Bound(NamedTuple):
    eps: float
    eta: float
    holds: bool


def _log(n: int) -> float:
    if n < 2:
        raise ValueError("bounds need n >= 2")
    return math.log(n)


def _eta_degree(ds: DegreeSummary, n: int) -> float:
    """``r0 n^{1 - delta_rs/(8 log n)}``: failure mass of the stubborn-degree lower bound."""
    return ds.r0 * n ** (1.0 - ds.delta_rs_min / (8.0 * _log(n)))


def _safe_div(a: float, b: float) -> float:
    if b > 0:
        return a / b
    return math.inf if a > 0 else (0.0 if a == 0 else -math.inf)


def bound_M(ds: DegreeSummary, n: int) -> Bound:
    """Spectral deviation of ``m_bar`` from its expectation."""
    ln = _log(n)
    return Bound(4.0 * math.sqrt(ds.delta_r_max * ln), 2.0 * ds.r0 * n ** -0.2,
                 ds.delta_r_max >= ln)


def bound_U(ds: DegreeSummary, n: int) -> Bound:
    """Spectral deviation of ``u_bar`` from ``psi_s``."""
    ln = _log(n)
    d = ds.d_rs_sr
    return Bound(2.0 * math.sqrt(d * ln), 2.0 * n ** -0.2, d >= ln)


def bound_Minv_case1(ds: DegreeSummary, n: int) -> Bound:
    m = bound_M(ds, n)
    d = ds.delta_rs_min
    return Bound(_safe_div(2.0 * m.eps, d * d), _eta_degree(ds, n) + m.eta,
                 d > 8.0 * _log(n))


def bound_Minv_case2(ds: DegreeSummary, lambda1: float, n: int) -> Bound:
    m = bound_M(ds, n)
    gap = lambda1 - m.eps
    eps = _safe_div(m.eps, lambda1 * gap) if gap > 0 else math.inf
    return Bound(eps, m.eta, gap > 0 and m.holds)


def bound_alpha_rho_case1(ds: DegreeSummary, alpha_star: float, n: int) -> Bound:
    """Bound on ``rho(q_bar)`` jointly with ``alpha >= alpha*/2``."""
    return Bound(1.0 - _safe_div(ds.delta_rs_min, 6.0 * alpha_star),
                 _eta_degree(ds, n) + 2.0 * n ** (-2.0 / 3.0),
                 ds.delta_rs_min > 8.0 * _log(n))


def bound_alpha_rho_case2(ds: DegreeSummary, alpha_star: float, lambda1: float, n: int) -> Bound:
    m = bound_M(ds, n)
    return Bound(1.0 - _safe_div(lambda1 - m.eps, 3.0 * alpha_star),
                 m.eta + 2.0 * n ** -0.125, lambda1 > m.eps and m.holds)


def bound_x_case1(ds: DegreeSummary, n: int) -> Bound:
    """``||x^G - x*|| <= eps ||z||`` when stubborn degrees are uniformly large."""
    ln = _log(n)
    d = ds.delta_rs_min
    eps = 4.0 * (_safe_div(math.sqrt(ds.d_rs_sr * ln), d)
                 + _safe_div(2.0 * math.sqrt(ds.delta_r_max * ln) * ds.psi_s_norm, d * d))
    if d <= 0:
        eps = math.inf
    eta = _eta_degree(ds, n) + 2.0 * (1.0 + ds.r0) * n ** -0.2 + 2.0 * n ** (-2.0 / 3.0)
    return Bound(eps, eta, d > 8.0 * ln)


def bound_x_case2(ds: DegreeSummary, lambda1: float, n: int) -> Bound:
    """As :func:`bound_x_case1` with the smallest eigenvalue of ``m_bar*`` in place of ``delta_rs``."""
    ln = _log(n)
    em = 4.0 * math.sqrt(ds.delta_r_max * ln)
    gap = lambda1 - em
    if gap > 0:
        eps = 2.0 * (math.sqrt(ds.d_rs_sr * ln) / gap
                     + _safe_div(2.0 * math.sqrt(ds.delta_r_max * ln) * ds.psi_s_norm, lambda1 * gap))
    else:
        eps = math.inf
    eta = 2.0 * (1.0 + ds.r0) * n ** -0.2 + 2.0 * n ** -0.125
    holds = gap > 0 and ds.delta_r_max >= ln and ds.d_rs_sr >= ln
    return Bound(eps, eta, holds)


def uniform_model_eps_ceiling(c_s: float, n: int, psi: float) -> float:
    """Closed-form ceiling of the stubborn-degree bound for the uniform model.

    With ``n_s = c_s n`` and a common link probability ``psi`` the bound
    reduces to ``4 [c_s sqrt(1-c_s) + 2(1-c_s)] / c_s^2 * sqrt(log n / (n psi))``
    after relaxing ``||psi_s||`` to ``max(Delta_rs, Delta_sr)``.
    """
    return (4.0 * (c_s * math.sqrt(1.0 - c_s) + 2.0 * (1.0 - c_s)) / c_s ** 2
            * math.sqrt(math.log(n) / (n * psi)))


@dataclass(frozen=True)
class BoundReport:
    case: str
    eps_x: float
    eta_x: float
    eps_M: float
    eta_M: float
    eps_U: float
    eta_U: float
    eps_Minv: float
    eta_Minv: float
    eps_Q: float
    eta_Q: float
    assumption_flags: dict
    vacuous: bool
    n: int

    @property
    def gated(self) -> bool:
        """All hypotheses of the selected case hold."""
        f = self.assumption_flags
        if self.case == "stubborn_min_degree":
            return f["delta_rs_gt_8logn"]
        return f["lambda1_gt_4sqrt"] and f["delta_r_ge_logn"] and f["d_rs_sr_ge_logn"]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["gated"] = self.gated
        return {k: (None if isinstance(v, float) and not math.isfinite(v) else v)
                for k, v in d.items()}


def bound_report(ds: DegreeSummary, alpha_star: float, lambda1: float, n: int,
                 case: str = "stubborn_min_degree") -> BoundReport:
    """All bounds for one case, with hypothesis flags.

    A report is vacuous when any of its failure probabilities reaches 1.
    """
    if case not in CASES:
        raise ValueError(f"case must be one of {CASES}")
    ln = _log(n)
    m, u = bound_M(ds, n), bound_U(ds, n)
    if case == "stubborn_min_degree":
        x, mi, q = bound_x_case1(ds, n), bound_Minv_case1(ds, n), bound_alpha_rho_case1(ds, alpha_star, n)
    else:
        x, mi, q = (bound_x_case2(ds, lambda1, n), bound_Minv_case2(ds, lambda1, n),
                    bound_alpha_rho_case2(ds, alpha_star, lambda1, n))
    flags = {
        "delta_rs_gt_8logn": ds.delta_rs_min > 8.0 * ln,
        "lambda1_gt_4sqrt": lambda1 > 4.0 * math.sqrt(ds.delta_r_max * ln),
        "delta_r_ge_logn": ds.delta_r_max >= ln,
        "d_rs_sr_ge_logn": ds.d_rs_sr >= ln,
    }
    etas = (x.eta, m.eta, u.eta, mi.eta, q.eta)
    return BoundReport(case, x.eps, x.eta, m.eps, m.eta, u.eps, u.eta, mi.eps, mi.eta,
                       q.eps, q.eta, flags, any(e >= 1.0 for e in etas), n)


@dataclass(frozen=True)
class TimeAverageBound:
    case: str
    eps_s: float
    s_bar_star: float
    eta_s_t: float
    eta_s_n: float
    t_min: float
    total_radius: float
    t: int
    holds: bool

    @property
    def failure_bound(self) -> float:
        return self.eta_s_t + self.eta_s_n


class OutOfDomainError(ValueError):
    pass


def bound_time_average(ds: DegreeSummary, alpha_star: float, c_x: float, lambda1: float,
                       n: int, eps_s: float, t: int, z_norm: float,
                       case: str = "stubborn_min_degree") -> TimeAverageBound:
    """Concentration of ``S(t)`` around the expected-graph opinions.

    ``P{||S(t) - x*|| <= sqrt(n_r) eps_s + eps_x ||z||} >= 1 - eta_s_t - eta_s_n``
    for ``t > 2 s_bar / eps_s``; ``z_norm`` is ``||z||``.
    """
    if eps_s <= 0:
        raise ValueError("eps_s must be positive")
    ln = _log(n)
    sq = math.sqrt(ds.n_r)
    if case == "stubborn_min_degree":
        s_bar = _safe_div(12.0 * sq * c_x * alpha_star, ds.delta_rs_min)
        xb = bound_x_case1(ds, n)
    elif case == "spectral":
        gap = lambda1 - 4.0 * math.sqrt(ds.delta_r_max * ln)
        s_bar = _safe_div(6.0 * sq * c_x * alpha_star, gap) if gap > 0 else math.inf
        xb = bound_x_case2(ds, lambda1, n)
    else:
        raise ValueError(f"case must be one of {CASES}")
    t_min = 2.0 * s_bar / eps_s
    if not t > t_min:
        raise OutOfDomainError(f"t = {t} must exceed 2 s_bar / eps_s = {t_min:.6g}")
    eta_t = 2.0 * ds.n_r * math.exp(-((t * eps_s - 2.0 * s_bar) ** 2) / (2.0 * t * s_bar ** 2))
    return TimeAverageBound(case, eps_s, s_bar, eta_t, xb.eta, t_min,
                            sq * eps_s + xb.eps * z_norm, int(t), xb.holds)


def entrywise_violation_set(x_g: np.ndarray, x_star: np.ndarray, eps: float):
    """Agents whose two expected opinions differ by more than ``eps``.

    Returns ``(indices, count, fraction_within)``.
    """
    x_g, x_star = np.asarray(x_g), np.asarray(x_star)
    if x_g.shape != x_star.shape:
        raise ValueError("vectors must have equal length")
    if eps <= 0:
        raise ValueError("eps must be positive")
    idx = np.flatnonzero(np.abs(x_g - x_star) > eps)
    return idx, int(idx.size), 1.0 - idx.size / x_g.size


# ------------------------------------------------------------ Monte Carlo

@dataclass(frozen=True)
class CoverageReport:
    case: str
    eps_x: float
    eta_x: float
    gated: bool
    vacuous: bool
    trials: int
    singular: int
    exceedances: int
    rows: list

    @property
    def exceedance_frequency(self) -> float:
        used = self.trials - self.singular
        return self.exceedances / used if used else math.nan

    @property
    def coverage(self) -> float:
        return 1.0 - self.exceedance_frequency

    @property
    def passed(self) -> bool:
        """A vacuous bound is satisfied by definition."""
        return self.vacuous or self.exceedance_frequency <= self.eta_x


def choose_case(ds: DegreeSummary, alpha_star: float, lambda1: float, n: int) -> str:
    """First case whose hypotheses hold; otherwise the one with the smaller radius."""
    reps = [bound_report(ds, alpha_star, lambda1, n, c) for c in CASES]
    for r in reps:
        if r.gated:
            return r.case
    return min(reps, key=lambda r: r.eps_x).case


def mc_validate_concentration(model, z_s: np.ndarray, trials: int, seed: int,
                              case: str = "auto") -> CoverageReport:
    """Empirical frequency of ``||x^G - x*|| > eps_x ||z||`` over sampled graphs.

    Trial ``k`` samples its graph from ``derive_seed(seed, k)``; singular
    samples are skipped and counted.
    """
    from .analytic_solver import SingularSystemError, expected_final_opinions, lambda_min
    from .graph_models import assemble_system, degree_summary, expected_graph, sample_graph
    from .rng import derive_seed

    if trials < 1:
        raise ValueError("trials must be at least 1")
    z_s = np.asarray(z_s, dtype=np.float64)
    eg = expected_graph(model)
    sys_star = assemble_system(eg)
    x_star = expected_final_opinions(sys_star, z_s, spectrum=False).x
    ds = degree_summary(model)
    lam1 = lambda_min(sys_star.m_bar)
    if case == "auto":
        case = choose_case(ds, eg.alpha_star, lam1, model.n)
    rep = bound_report(ds, eg.alpha_star, lam1, model.n, case)
    z_norm = float(np.linalg.norm(z_s))
    rows, singular, exceed = [], 0, 0
    for k in range(trials):
        s = derive_seed(seed, k)
        try:
            x_g = expected_final_opinions(assemble_system(sample_graph(model, s)), z_s,
                                          spectrum=False).x
        except SingularSystemError:
            singular += 1
            rows.append({"trial": k, "seed": s, "deviation": math.nan, "eps_x": rep.eps_x,
                         "exceeded": False, "singular": True})
            continue
        dev = float(np.linalg.norm(x_g - x_star)) / z_norm if z_norm > 0 else 0.0
        hit = dev > rep.eps_x
        exceed += hit
        rows.append({"trial": k, "seed": s, "deviation": dev, "eps_x": rep.eps_x,
                     "exceeded": bool(hit), "singular": False})
    if singular == trials:
        raise ValueError("every sampled graph was singular; the model is degenerate")
    return CoverageReport(case, rep.eps_x, rep.eta_x, rep.gated, rep.vacuous or rep.eta_x >= 1.0,
                          trials, singular, exceed, rows)


@dataclass(frozen=True)
class MatrixBoundReport:
    """Empirical coverage of the matrix-level bounds over sampled graphs."""

    n: int
    trials: int
    bound_M: Bound
    bound_U: Bound
    bound_Q: Bound
    case: str
    freq_M: float
    freq_U: float
    freq_Q: float
    rows: list

    def checks(self) -> dict:
        """Per bound: whether ``frequency >= 1 - eta`` (trivially true when ``eta >= 1``)."""
        out = {}
        for name, b, f in (("M", self.bound_M, self.freq_M), ("U", self.bound_U, self.freq_U),
                           ("Q", self.bound_Q, self.freq_Q)):
            out[name] = {"eps": b.eps, "eta": b.eta, "holds": b.holds, "frequency": f,
                         "informative": b.eta < 1.0, "passed": b.eta >= 1.0 or f >= 1.0 - b.eta}
        return out


def mc_matrix_bound_checks(model, trials: int, seed: int, case: str = "auto") -> MatrixBoundReport:
    """Monte-Carlo check of the deviation bounds for ``m_bar``, ``u_bar`` and ``rho(q_bar)``.

    The ``rho`` event is joint with ``alpha^G >= alpha*/2``, matching the
    statement it checks.
    """
    import scipy.linalg

    from .analytic_solver import lambda_min
    from .graph_models import assemble_system, degree_summary, expected_graph, sample_graph
    from .rng import derive_seed

    eg = expected_graph(model)
    ss = assemble_system(eg)
    ds = degree_summary(model)
    n = model.n
    lam1 = lambda_min(ss.m_bar)
    if case == "auto":
        case = choose_case(ds, eg.alpha_star, lam1, n)
    bm, bu = bound_M(ds, n), bound_U(ds, n)
    bq = (bound_alpha_rho_case1(ds, eg.alpha_star, n) if case == "stubborn_min_degree"
          else bound_alpha_rho_case2(ds, eg.alpha_star, lam1, n))
    rows = []
    for k in range(trials):
        s = derive_seed(seed, k)
        sg = assemble_system(sample_graph(model, s))
        dm = float(np.abs(scipy.linalg.eigvalsh(sg.m_bar - ss.m_bar)[[0, -1]]).max())
        du = float(scipy.linalg.svdvals(sg.u_bar - ss.u_bar)[0]) if ss.n_s else 0.0
        if sg.alpha > 0:
            rho = 1.0 - lambda_min(sg.m_bar) / (2.0 * sg.alpha)
        else:
            rho = 1.0
        alpha_ok = sg.alpha >= eg.alpha_star / 2.0 and sg.alpha > 0
        rows.append({"trial": k, "seed": s, "m_dev": dm, "u_dev": du, "rho_q": rho,
                     "alpha": sg.alpha, "alpha_half_ok": alpha_ok})
    f_m = float(np.mean([r["m_dev"] <= bm.eps for r in rows]))
    f_u = float(np.mean([r["u_dev"] <= bu.eps for r in rows]))
    f_q = float(np.mean([r["rho_q"] <= bq.eps and r["alpha_half_ok"] for r in rows]))
    return MatrixBoundReport(n, trials, bm, bu, bq, case, f_m, f_u, f_q, rows)
