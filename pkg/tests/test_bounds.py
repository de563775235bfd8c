import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gossip_conc.bounds import (OutOfDomainError, bound_M, bound_Minv_case1, bound_Minv_case2,
                                bound_U, bound_alpha_rho_case1, bound_report, bound_time_average,
                                bound_x_case1, bound_x_case2, entrywise_violation_set,
                                mc_matrix_bound_checks, mc_validate_concentration,
                                uniform_model_eps_ceiling)
from gossip_conc.graph_models import (DegreeSummary, RgsModel, build_er_psi, degree_summary,
                                      uniform_stubborn_model)


def summary(delta_r=200.0, d_rs=100.0, d_sr=0.0, delta_min=50.0, norm=80.0,
            n_r=900, n_s=100, delta_rr=None):
    delta_rr = delta_r - d_rs if delta_rr is None else delta_rr
    return DegreeSummary(delta_r_max=delta_r, delta_rr_max=delta_rr, delta_rs_max=d_rs,
                         delta_sr_max=d_sr, delta_rs_min=delta_min, delta_rs_min_pos=delta_min,
                         delta_rr_max_pos=delta_rr, r0=n_r / (n_r + n_s), psi_s_norm=norm,
                         n_r1=n_r, n_r2=0, n_r=n_r, n_s=n_s)


def test_case1_hand_value():
    # frozen calculator evaluation of the closed form at these inputs
    b = bound_x_case1(summary(), 1000)
    assert b.eps == pytest.approx(11.617929511358358, rel=1e-12)
    assert b.holds is (50.0 > 8 * math.log(1000))


def test_eps_M_at_log_n():
    n = 500
    ds = summary(delta_r=math.log(n))
    b = bound_M(ds, n)
    assert b.eps == pytest.approx(4 * math.log(n), rel=1e-14)
    assert b.holds


def test_eps_U_and_eta():
    b = bound_U(summary(d_rs=10.0, d_sr=30.0), 1000)
    assert b.eps == pytest.approx(2 * math.sqrt(30 * math.log(1000)))
    assert b.eta == pytest.approx(2 * 1000 ** -0.2)


def test_minv_cases():
    ds = summary()
    em = 4 * math.sqrt(200 * math.log(1000))
    assert bound_Minv_case1(ds, 1000).eps == pytest.approx(2 * em / 2500)
    assert bound_Minv_case2(ds, 400.0, 1000).eps == pytest.approx(em / (400 * (400 - em)))
    assert math.isinf(bound_Minv_case2(ds, em / 2, 1000).eps)


def test_alpha_rho_case1():
    b = bound_alpha_rho_case1(summary(), 300.0, 1000)
    assert b.eps == pytest.approx(1 - 50 / 1800)


def test_case2_with_lambda_equal_delta():
    # lambda_1 = delta_rs: the degree terms are replaced by (lambda - eps_M), factor 2 vs 4
    ds = summary(delta_min=2000.0, delta_r=2100.0, d_rs=2000.0, norm=1500.0)
    c1 = bound_x_case1(ds, 1000).eps
    c2 = bound_x_case2(ds, 2000.0, 1000).eps
    assert c2 > c1 / 2 and c2 < 2 * c1


def test_limits():
    ds_small = summary(delta_min=50.0)
    ds_big = summary(delta_min=5e6)
    assert bound_x_case1(ds_big, 1000).eps < 1e-3 * bound_x_case1(ds_small, 1000).eps
    assert bound_x_case2(summary(), 1e9, 1000).eps < 1e-5


@settings(max_examples=200, deadline=None)
@given(st.floats(1, 1e4), st.floats(1, 1e4), st.floats(1, 1e4), st.floats(1, 1e4),
       st.floats(1.01, 2.0), st.integers(10, 10**6))
def test_case1_monotonicity(delta, delta_r, d, norm, f, n):
    base = bound_x_case1(summary(delta_r=delta_r, d_rs=d, delta_min=delta, norm=norm), n).eps
    assert bound_x_case1(summary(delta_r=delta_r, d_rs=d, delta_min=delta * f, norm=norm), n).eps < base
    assert bound_x_case1(summary(delta_r=delta_r * f, d_rs=d, delta_min=delta, norm=norm), n).eps > base
    assert bound_x_case1(summary(delta_r=delta_r, d_rs=d * f, delta_min=delta, norm=norm), n).eps > base
    assert bound_x_case1(summary(delta_r=delta_r, d_rs=d, delta_min=delta, norm=norm * f), n).eps > base


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1e4), st.floats(1, 1e4), st.floats(0, 1e4), st.floats(0, 1e4),
       st.floats(0, 1e5), st.integers(2, 10**6), st.sampled_from(["stubborn_min_degree", "spectral"]))
def test_report_invariants(delta, delta_r, d, norm, lam, n, case):
    ds = summary(delta_r=delta_r, d_rs=d, delta_min=delta, norm=norm)
    r = bound_report(ds, 2 * delta_r, lam, n, case)
    etas = [r.eta_x, r.eta_M, r.eta_U, r.eta_Minv, r.eta_Q]
    assert all(0 < e < math.inf for e in etas)
    assert r.vacuous == any(e >= 1 for e in etas)
    assert r.eps_M >= 0 and r.eps_U >= 0 and r.eps_x >= 0
    ln = math.log(n)
    assert r.assumption_flags["delta_rs_gt_8logn"] == (delta > 8 * ln)
    assert r.assumption_flags["delta_r_ge_logn"] == (delta_r >= ln)
    json.dumps(r.to_dict())


def test_uniform_ceiling_dominates_exact_bound():
    for n in (100, 1000, 3000):
        for c_s in (0.1, 0.3, 0.5):
            psi = math.log(n) ** 2 / n
            ds = degree_summary(uniform_stubborn_model(n, c_s, psi))
            exact = bound_x_case1(ds, n).eps
            assert exact <= uniform_model_eps_ceiling(c_s, n, psi) * (1 + 1e-9)


def test_time_average_domain_and_limit():
    ds = summary()
    kw = dict(ds=ds, alpha_star=300.0, c_x=1.0, lambda1=50.0, n=1000, eps_s=0.05, z_norm=10.0)
    s_bar = 12 * math.sqrt(900) * 300 / 50
    t_min = 2 * s_bar / 0.05
    with pytest.raises(OutOfDomainError):
        bound_time_average(t=int(t_min), **kw)  # t_min is an integer here: boundary rejected
    assert t_min == int(t_min)
    b1 = bound_time_average(t=int(t_min) + 1, **kw)
    b2 = bound_time_average(t=int(1e12), **kw)
    assert b1.s_bar_star == pytest.approx(s_bar)
    assert b2.eta_s_t < 1e-6 < b1.eta_s_t
    assert b1.total_radius == pytest.approx(30 * 0.05 + bound_x_case1(ds, 1000).eps * 10)
    with pytest.raises(ValueError):
        bound_time_average(t=10**9, case="other", **kw)


def test_violation_set():
    x = np.linspace(0, 1, 11)
    idx, cnt, frac = entrywise_violation_set(x, x, 0.1)
    assert cnt == 0 and frac == 1.0
    assert entrywise_violation_set(x + 0.05, x, 0.1)[1] == 0
    y = x.copy()
    y[[2, 7]] += 0.5
    idx, cnt, frac = entrywise_violation_set(y, x, 0.1)
    assert list(idx) == [2, 7] and frac == pytest.approx(9 / 11)
    with pytest.raises(ValueError):
        entrywise_violation_set(x, x[:3], 0.1)
    with pytest.raises(ValueError):
        entrywise_violation_set(x, x, 0.0)


def test_mc_deterministic_model_has_zero_deviation():
    m = RgsModel(build_er_psi(6, 1.0), np.ones((6, 2)))
    rep = mc_validate_concentration(m, np.array([1.0, 0.0]), 5, seed=3)
    assert all(r["deviation"] < 1e-12 for r in rep.rows)
    assert rep.exceedances == 0 and rep.singular == 0


def test_mc_vacuous_report_passes():
    m = uniform_stubborn_model(60, 0.2, 0.3)
    rep = mc_validate_concentration(m, np.linspace(0, 1, 12), 3, seed=1)
    assert rep.vacuous and rep.passed


def test_mc_is_deterministic_and_all_singular_raises():
    m = uniform_stubborn_model(40, 0.25, 0.3)
    z = np.linspace(0, 1, 10)
    a = mc_validate_concentration(m, z, 4, seed=9)
    b = mc_validate_concentration(m, z, 4, seed=9)
    assert a.rows == b.rows
    with pytest.raises(ValueError):
        mc_validate_concentration(m, z, 0, seed=0)
    # stubborn links are so rare that no sample is grounded
    sparse = RgsModel(np.zeros((3, 3)), np.full((3, 1), 1e-12))
    with pytest.raises(ValueError, match="singular"):
        mc_validate_concentration(sparse, np.array([1.0]), 3, seed=0)


def test_matrix_bound_checks_shape():
    m = uniform_stubborn_model(80, 0.25, 0.4)
    rep = mc_matrix_bound_checks(m, 10, seed=2)
    chk = rep.checks()
    assert set(chk) == {"M", "U", "Q"}
    for v in chk.values():
        assert 0.0 <= v["frequency"] <= 1.0
        assert v["passed"] == (v["eta"] >= 1 or v["frequency"] >= 1 - v["eta"])
