"""End-to-end acceptance checks, one test per criterion, each at its stated tolerance.

Every test records a PASS/FAIL line (printed in the terminal summary) before
asserting, so a failing criterion still reports what was measured.
"""
import math
import time

import mpmath as mp
import networkx as nx
import numpy as np
import pytest

from conftest import record
from gossip_conc.analytic_solver import (build_expected_update, expected_final_opinions,
                                         solution_operator)
from gossip_conc.bounds import (bound_M, bound_Minv_case1, bound_Minv_case2, bound_U,
                                bound_alpha_rho_case1, bound_alpha_rho_case2, bound_time_average,
                                bound_x_case1, bound_x_case2, mc_matrix_bound_checks,
                                mc_validate_concentration, uniform_model_eps_ceiling)
from gossip_conc.experiments import ExperimentConfig, draw_opinions, run_experiment
from gossip_conc.gossip_engine import InteractionDistribution, init_trajectory, run, step, time_average
from gossip_conc.graph_models import (DegreeSummary, RgsModel, SampledGraph, assemble_system,
                                      expected_graph, five_community_sbm, uniform_stubborn_model)
from gossip_conc.rng import DOMAIN_OPINIONS, derive_seed, uniforms

pytestmark = pytest.mark.slow


# ------------------------------------------------------------------ 1

def random_grounded_model(rng):
    n_r = int(rng.integers(1, 181))
    n_s = int(rng.integers(1, 21))
    dens = rng.uniform(0.02, 0.8)
    a = np.triu(rng.random((n_r, n_r)) * (rng.random((n_r, n_r)) < dens), 1)
    ps = rng.random((n_r, n_s)) * (rng.random((n_r, n_s)) < dens)
    # at least one stubborn link per agent keeps every component grounded
    ps[np.arange(n_r), rng.integers(0, n_s, n_r)] = rng.uniform(0.01, 1.0, n_r)
    return RgsModel(a + a.T, ps)


def test_criterion_1_solver_properties():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst_row, worst_neg, hull_ok = 0.0, 0.0, True
    for _ in range(200):
        m = random_grounded_model(rng)
        s = assemble_system(expected_graph(m))
        op = solution_operator(s)
        worst_row = max(worst_row, float(np.abs(op.sum(axis=1) - 1).max()))
        worst_neg = min(worst_neg, float(op.min()))
        z = rng.random(m.n_s)
        x = expected_final_opinions(s, z, spectrum=False).x
        hull_ok &= bool(z.min() - 1e-12 <= x.min() and x.max() <= z.max() + 1e-12)
    dt = time.perf_counter() - t0
    ok = worst_row <= 1e-10 and worst_neg >= 0 and hull_ok and dt < 10
    record(1, ok, f"max |row sum - 1| = {worst_row:.2e}, min entry = {worst_neg:.2e}, "
                  f"hull {hull_ok}, {dt:.1f} s")
    assert worst_row <= 1e-10
    assert worst_neg >= 0
    assert hull_ok
    assert dt < 10


# ------------------------------------------------------------------ 2

def small_connected_graphs():
    """Connected graphs with n_r <= 3 regular and 1 or 2 stubborn agents, up to isomorphism.

    Regular agents are interchangeable and so are stubborn agents (swapping
    the two stubborn agents swaps their opinions, which the symmetric choice
    z = (1, 0) covers by reflection).  A stubborn agent is always required:
    without one the stationary mean is not the solution of a grounded system.
    """
    out = []
    for n_r in (1, 2, 3):
        for n_s in (1, 2):
            slots = ([(i, j) for i in range(n_r) for j in range(i + 1, n_r)]
                     + [(i, n_r + s) for i in range(n_r) for s in range(n_s)])
            reps = []
            for mask in range(1, 1 << len(slots)):
                e = [slots[b] for b in range(len(slots)) if mask >> b & 1]
                g = nx.Graph()
                g.add_nodes_from((v, {"kind": "r" if v < n_r else "s"}) for v in range(n_r + n_s))
                g.add_edges_from(e)
                if not nx.is_connected(g):
                    continue
                if any(nx.is_isomorphic(g, h, node_match=lambda a, b: a["kind"] == b["kind"])
                       for h in reps):
                    continue
                reps.append(g)
                out.append(SampledGraph(n_r, n_s, np.array(e, dtype=np.int64), 0))
    return out


def test_criterion_2_small_instance_oracle():
    graphs = small_connected_graphs()
    assert len(graphs) == 64
    seeds, t_max, tol = 100, 10_000_000, 1e-2
    # compile outside the timed region
    run(init_trajectory([0.5], [1.0], 0), InteractionDistribution.from_graph(graphs[0]), 10)
    t0 = time.perf_counter()
    worst_pass, worst_dev = seeds, 0.0
    for gi, g in enumerate(graphs):
        z = np.array([1.0, 0.0][:g.n_s])
        x = expected_final_opinions(assemble_system(g), z, spectrum=False).x
        dist = InteractionDistribution.from_graph(g)
        good = 0
        for k in range(seeds):
            s = derive_seed(17, gi, k)
            tr = run(init_trajectory(uniforms(s, DOMAIN_OPINIONS, g.n_r), z, s), dist, t_max)
            dev = float(np.abs(time_average(tr) - x).max())
            worst_dev = max(worst_dev, dev)
            good += dev <= tol
        worst_pass = min(worst_pass, good)
    dt = time.perf_counter() - t0
    ok = worst_pass >= 95 and dt < 120
    record(2, ok, f"{len(graphs)} graphs, worst graph {worst_pass}/100 seeds within {tol}, "
                  f"max deviation {worst_dev:.2e}, runtime {dt:.0f} s (limit 120 s)")
    assert worst_pass >= 95
    assert dt < 120, f"runtime {dt:.0f} s exceeds 120 s"


# ------------------------------------------------------------------ 3

def test_criterion_3_one_step_mean():
    g = SampledGraph(2, 2, np.array([[0, 1], [0, 2], [1, 2], [1, 3]]), 0)
    dist = InteractionDistribution.from_graph(g)
    x0, z = np.array([0.2, 0.7]), np.array([1.0, 0.0])
    draws = np.array([step(init_trajectory(x0, z, s), dist).x for s in range(100_000)])
    u = build_expected_update(assemble_system(g))
    want = u.q_bar @ x0 + u.r_bar @ z
    se = draws.std(axis=0, ddof=1) / math.sqrt(len(draws))
    z_scores = np.abs(draws.mean(axis=0) - want) / se
    ok = bool(np.all(z_scores <= 4))
    record(3, ok, f"|mean - expected| / SE = {np.round(z_scores, 2).tolist()} (limit 4)")
    assert ok


# ------------------------------------------------------------------ 4

def test_criterion_4_scaling():
    t0 = time.perf_counter()
    # eps*_n is the mean over 50 sampled graphs per n; a single draw at n = 100 has a
    # relative spread near 20%, which swamps the slope over this short grid
    res = run_experiment(ExperimentConfig("scaling", seed=0, trials=50,
                                          params={"n_grid": [100, 316, 1000, 3162], "c_s": 0.1}))
    dt = time.perf_counter() - t0
    s = res.summary
    slope_ok = -1.3 <= s["slope_loglog"] <= -0.7
    ok = s["strictly_decreasing"] and slope_ok and s["dominance_at_gated_points"] and dt < 300
    record(4, ok, f"eps* = {[round(e, 4) for e in s['eps_star']]}, slope {s['slope_loglog']:.3f}, "
                  f"gated points {s['gated_points']}, dominance {s['dominance_at_gated_points']}, "
                  f"{dt:.0f} s")
    assert s["strictly_decreasing"]
    assert slope_ok
    assert s["dominance_at_gated_points"]
    assert dt < 300


# ------------------------------------------------------------------ 5

def test_criterion_5_within_community_equality():
    m = five_community_sbm(gamma=2.0)
    z, _ = draw_opinions(m, 0, [[0.9, 1.0], [0.0, 0.1]])
    x = expected_final_opinions(assemble_system(expected_graph(m)), z, spectrum=False).x
    lab = m.communities[:m.n_r]
    spread = max(float(np.ptp(x[lab == c])) for c in np.unique(lab))
    distinct = int(np.unique(np.round(x, 8)).size)
    ok = distinct == 3 and spread < 1e-8
    record(5, ok, f"{distinct} distinct values, max within-community spread {spread:.1e}")
    assert distinct == 3
    assert spread < 1e-8


# ------------------------------------------------------------------ 6

def sbm_trials(**params):
    res = run_experiment(ExperimentConfig("sbm_profile", seed=11, trials=5, params=params))
    return res.summary["trials"]


def test_criterion_6_sbm_regimes():
    # community ids: regular 0, 1, 2; stubborn 3 (high opinions), 4 (low opinions)
    strong = sbm_trials(gamma=3.5)
    gap1 = [abs(t["mean_x_g"][0] - t["mean_z"][3]) for t in strong]
    gap3 = [abs(t["mean_x_g"][2] - t["mean_z"][4]) for t in strong]
    weak = sbm_trials(gamma=1.0)
    spread = [t["spread_x_g"] for t in weak]
    mid = sbm_trials(gamma=3.5, c21=1.0)
    gap2 = [abs(t["mean_x_g"][1] - t["mean_z"][3]) for t in mid]
    parts = {
        "gamma=3.5 V_r1": max(gap1) < 0.05,
        "gamma=3.5 V_r3": max(gap3) < 0.05,
        "gamma=1 spread": max(spread) < 0.1,
        "c21=1 V_r2": max(gap2) < 0.1,
    }
    record(6, all(parts.values()),
           f"max gaps V_r1 {max(gap1):.4f}, V_r3 {max(gap3):.4f} (limit 0.05); "
           f"gamma=1 max spread {max(spread):.4f} (limit 0.1); c21=1 V_r2 gap {max(gap2):.4f} "
           f"(limit 0.1); {parts}")
    assert all(parts.values()), parts


# ------------------------------------------------------------------ 7

def test_criterion_7_time_average():
    t0 = time.perf_counter()
    res = run_experiment(ExperimentConfig("time_average", seed=5, trials=20,
                                          params={"gamma": 2.0, "t_max": 50_000, "eps_s": 0.05}))
    dt = time.perf_counter() - t0
    s = res.summary
    ok = s["max_rms_dev_x_g"] < 0.05 and s["bound_respected"] and dt < 600
    record(7, ok, f"max ||S - x^G||/sqrt(n_r) = {s['max_rms_dev_x_g']:.4f} (limit 0.05), "
                  f"failure bound {s['failure_bound']:.3g} "
                  f"({'informative' if s['informative'] else 'vacuous'}), "
                  f"radius failure frequency {s['radius_failure_frequency']}, {dt:.0f} s")
    assert s["max_rms_dev_x_g"] < 0.05
    assert s["bound_respected"]
    assert dt < 600


# ------------------------------------------------------------------ 8

mp.mp.dps = 50


def ref_bounds(p):
    """High-precision recomputation of every closed form from the raw parameters."""
    n, ln = mp.mpf(p["n"]), mp.log(p["n"])
    d_r, d, dl, nrm = (mp.mpf(p[k]) for k in ("delta_r", "d", "delta", "norm"))
    lam, a_star, r0, n_r = mp.mpf(p["lam"]), mp.mpf(p["alpha"]), mp.mpf(p["r0"]), mp.mpf(p["n_r"])
    e_m = 4 * mp.sqrt(d_r * ln)
    eta_m = 2 * r0 * n ** mp.mpf(-0.2)
    eta_deg = r0 * n ** (1 - dl / (8 * ln))
    out = {
        "eps_M": e_m, "eta_M": eta_m,
        "eps_U": 2 * mp.sqrt(d * ln), "eta_U": 2 * n ** mp.mpf(-0.2),
        "eps_x1": 4 * (mp.sqrt(d * ln) / dl + 2 * mp.sqrt(d_r * ln) * nrm / dl ** 2),
        "eta_x1": eta_deg + 2 * (1 + r0) * n ** mp.mpf(-0.2) + 2 * n ** (mp.mpf(-2) / 3),
        "eps_x2": 2 * (mp.sqrt(d * ln) / (lam - e_m) + 2 * mp.sqrt(d_r * ln) * nrm / (lam * (lam - e_m))),
        "eta_x2": 2 * (1 + r0) * n ** mp.mpf(-0.2) + 2 * n ** mp.mpf(-0.125),
        "eps_Minv1": 2 * e_m / dl ** 2, "eta_Minv1": eta_deg + eta_m,
        "eps_Minv2": e_m / (lam * (lam - e_m)),
        "eps_Q1": 1 - dl / (6 * a_star), "eta_Q1": eta_deg + 2 * n ** (mp.mpf(-2) / 3),
        "eps_Q2": 1 - (lam - e_m) / (3 * a_star), "eta_Q2": eta_m + 2 * n ** mp.mpf(-0.125),
        "s_bar1": 12 * mp.sqrt(n_r) * p["c_x"] * a_star / dl,
        "s_bar2": 6 * mp.sqrt(n_r) * p["c_x"] * a_star / (lam - e_m),
    }
    for c in ("1", "2"):
        sb = out["s_bar" + c]
        t, eps_s = mp.mpf(p["t" + c]), mp.mpf(p["eps_s"])
        out["eta_st" + c] = 2 * n_r * mp.exp(-((t * eps_s - 2 * sb) ** 2) / (2 * t * sb ** 2))
    return out


def parameter_sets(k=20):
    rng = np.random.default_rng(8)
    for _ in range(k):
        n_r, n_s = int(rng.integers(50, 5000)), int(rng.integers(5, 1000))
        n = n_r + n_s
        delta = float(rng.uniform(1, 500))
        d = delta * float(rng.uniform(1, 5))
        d_r = d + float(rng.uniform(1, 500))
        e_m = 4 * math.sqrt(d_r * math.log(n))
        p = {"n": n, "n_r": n_r, "delta": delta, "d": d, "delta_r": d_r,
             "norm": float(rng.uniform(0.5, 1.0)) * d, "lam": e_m * float(rng.uniform(1.05, 4)),
             "alpha": float(rng.uniform(0.5, 1.0)) * n * d_r / 2, "r0": n_r / n,
             "c_x": float(rng.uniform(0.5, 2)), "eps_s": float(rng.uniform(0.01, 0.2))}
        yield p


def check_params(p):
    ds = DegreeSummary(delta_r_max=p["delta_r"], delta_rr_max=p["delta_r"] - p["d"],
                       delta_rs_max=p["d"], delta_sr_max=0.0, delta_rs_min=p["delta"],
                       delta_rs_min_pos=p["delta"], delta_rr_max_pos=p["delta_r"] - p["d"],
                       r0=p["r0"], psi_s_norm=p["norm"], n_r1=p["n_r"], n_r2=0,
                       n_r=p["n_r"], n_s=p["n"] - p["n_r"])
    n = p["n"]
    got = {}
    got["eps_M"], got["eta_M"], _ = bound_M(ds, n)
    got["eps_U"], got["eta_U"], _ = bound_U(ds, n)
    got["eps_x1"], got["eta_x1"], _ = bound_x_case1(ds, n)
    got["eps_x2"], got["eta_x2"], _ = bound_x_case2(ds, p["lam"], n)
    got["eps_Minv1"], got["eta_Minv1"], _ = bound_Minv_case1(ds, n)
    got["eps_Minv2"], _, _ = bound_Minv_case2(ds, p["lam"], n)
    got["eps_Q1"], got["eta_Q1"], _ = bound_alpha_rho_case1(ds, p["alpha"], n)
    got["eps_Q2"], got["eta_Q2"], _ = bound_alpha_rho_case2(ds, p["alpha"], p["lam"], n)
    for c, case in (("1", "stubborn_min_degree"), ("2", "spectral")):
        probe = bound_time_average(ds, p["alpha"], p["c_x"], p["lam"], n, p["eps_s"],
                                   10 ** 15, 1.0, case)
        # a time just past the boundary, where eta_S,t is a few units, exercises the exponent
        t = int(probe.t_min * 1.5) + 1
        p["t" + c] = t
        b = bound_time_average(ds, p["alpha"], p["c_x"], p["lam"], n, p["eps_s"], t, 1.0, case)
        got["s_bar" + c], got["eta_st" + c] = b.s_bar_star, b.eta_s_t
    ref = ref_bounds(p)
    worst = 0.0
    for k, v in got.items():
        r = ref[k]
        worst = max(worst, float(abs(mp.mpf(v) - r) / abs(r)) if r != 0 else abs(v))
    return worst


def test_criterion_8_bound_formulas():
    worst = max(check_params(p) for p in parameter_sets(20))
    # the uniform-model reduction: relaxed inputs reproduce constant * sqrt(log n / (n psi))
    red = 0.0
    for n, c_s, psi in ((100, 0.1, 0.2), (1000, 0.3, 0.05), (5000, 0.5, 0.01), (10**4, 0.2, 0.3)):
        d_rs, d_sr = c_s * n * psi, (1 - c_s) * n * psi
        ds = DegreeSummary(delta_r_max=n * psi, delta_rr_max=(1 - c_s) * n * psi,
                           delta_rs_max=d_rs, delta_sr_max=d_sr, delta_rs_min=d_rs,
                           delta_rs_min_pos=d_rs, delta_rr_max_pos=(1 - c_s) * n * psi,
                           r0=1 - c_s, psi_s_norm=max(d_rs, d_sr), n_r1=0, n_r2=0,
                           n_r=int(n * (1 - c_s)), n_s=int(n * c_s))
        ceil_ref = (4 * (c_s * mp.sqrt(1 - c_s) + 2 * (1 - c_s)) / c_s ** 2
                    * mp.sqrt(mp.log(n) / (n * mp.mpf(psi))))
        for v in (bound_x_case1(ds, n).eps, uniform_model_eps_ceiling(c_s, n, psi)):
            red = max(red, float(abs(mp.mpf(v) - ceil_ref) / ceil_ref))
    ok = worst <= 1e-12 and red <= 1e-12
    record(8, ok, f"20 parameter sets, max relative error {worst:.1e}; "
                  f"uniform-model reduction max relative error {red:.1e}")
    assert worst <= 1e-12
    assert red <= 1e-12


# ------------------------------------------------------------------ 9

def test_criterion_9_monte_carlo_coverage():
    model = uniform_stubborn_model(1000, 0.1)
    z, _ = draw_opinions(model, derive_seed(9, 0, 1))
    rep = mc_validate_concentration(model, z, 100, seed=9)
    main_ok = rep.vacuous or rep.exceedance_frequency <= rep.eta_x

    lem = mc_matrix_bound_checks(uniform_stubborn_model(500, 0.1), 200, seed=10)
    chk = lem.checks()
    # the rho bound is vacuous on that model, so it is also checked where its gate holds
    gated = mc_matrix_bound_checks(uniform_stubborn_model(200, 0.5, 0.5), 500, seed=11,
                            case="stubborn_min_degree")
    gchk = gated.checks()
    alpha_freq = float(np.mean([r["alpha_half_ok"] for r in gated.rows]))
    alpha_ok = alpha_freq >= 1 - 200 ** (-2 / 3)
    parts = {"x": main_ok, "M": chk["M"]["passed"], "U": chk["U"]["passed"],
             "Q": chk["Q"]["passed"], "Q_gated": gchk["Q"]["passed"], "alpha_half": alpha_ok}
    record(9, all(parts.values()),
           f"x: exceedance {rep.exceedance_frequency:.2f} vs eta {rep.eta_x:.3g} "
           f"({'vacuous' if rep.vacuous else 'informative'}); "
           + "; ".join(f"{k}: freq {v['frequency']:.3f} vs 1-eta {1 - v['eta']:.3f}"
                       for k, v in chk.items())
           + f"; gated Q: freq {gchk['Q']['frequency']:.3f} vs 1-eta {1 - gchk['Q']['eta']:.3f}"
           + f"; alpha >= alpha*/2 freq {alpha_freq:.3f}; {parts}")
    assert all(parts.values()), parts
