"""End-to-end acceptance checks, one PASS/FAIL line per criterion."""
import math
from importlib import resources

import numpy as np
import pytest
from scipy.optimize import linprog

from activeset import bundled_case, build_dcopf, build_ptdf, dc_power_flow
from activeset.cli import main
from activeset.discovery import DiscoveryConfig, TerminatedBy, derived_constants, discover_mass, window_size
from activeset.errors import SampleInfeasible
from activeset.lp_core import Status, check_feasibility, enumerate_vertices, solve_lp
from activeset.parametric import ReductionMode, instantiate, reduced_instance, solve_for_sample
from activeset.policy import evaluate_policy, objectives_match
from activeset.sampling import DistributionSpec, Kind, draw, make_distribution
from activeset.synthetic import low_complexity_bound, low_complexity_profile
from activeset.validation import complexity_check, run_trials, stopping_check
from conftest import random_network, report, triangle
from test_lp_core import random_polytope_lp

DEFAULT = DiscoveryConfig(0.05, 0.04, 0.01, 2.0)
LIGHT = DiscoveryConfig(0.1, 0.05, 0.05, 2.0)


def test_c1_constants():
    k = derived_constants(DEFAULT)
    W = window_size(k, 1)
    ok = k.m_lower == 201 and W == 13259 and math.isclose(DEFAULT.threshold, 0.01)
    report(1, ok, f"M_lower={k.m_lower} W={W} threshold={DEFAULT.threshold:.4f} (expect 201, 13259, 0.01)")
    assert ok


@pytest.mark.slow
@pytest.mark.parametrize("case", ["case3_demo.m", "case5_demo.m"])
@pytest.mark.parametrize("dist", ["normal", "uniform"])
def test_c2_one_set_cases(case, dist, tmp_path, capsys):
    import json

    with resources.as_file(bundled_case(case)) as path:
        out = tmp_path / "run"
        rc1 = main(["discover", "--case", str(path), "--dist", dist, "--out", str(out)])
        summary = capsys.readouterr().out.strip()
        rc2 = main(["evaluate", "--result", str(out), "--n-test", "20000"])
        p_line = capsys.readouterr().out.strip()
    res = json.loads((out / "result.json").read_text())["result"]
    ev = json.loads((out / "eval.json").read_text())["report"]
    ok = (rc1 == 0 and rc2 == 0 and res["K_M"] == 1 and res["M"] == 1 and res["W_M"] == 13259
          and res["rate"] == 0.0 and res["terminated_by"] == "StoppingRule"
          and ev["n_test"] == 20000 and ev["success_probability"] == 1.0)
    report(2, ok, f"{case} {dist}: {summary}, {p_line} on {ev['n_test']} tests")
    assert ok


@pytest.mark.slow
def test_c3_multi_set_case(case6_program, case6):
    dist = make_distribution(DistributionSpec(Kind.NORMAL, seed=0), case6)
    res = discover_mass(DEFAULT, case6_program, dist)
    rep = evaluate_policy(res.keys, case6_program, dist, 20000)
    fail = rep.failure_count / rep.n_test
    ok = (res.terminated_by is TerminatedBy.STOPPING_RULE and res.K >= 3 and fail < DEFAULT.alpha
          and rep.false_optima == 0)
    report(3, ok, f"case6_congested (default config): K={res.K} M={res.M} W={res.W} R={res.rate:.4f}; "
                  f"failure {rep.failure_count}/{rep.n_test} = {fail:.4f} < {DEFAULT.alpha}")
    assert ok


@pytest.fixture(scope="module")
def theorem_trials():
    profile = low_complexity_profile(10, 0.01, 1000)
    return run_trials(profile, LIGHT, 200, seed0=1)


@pytest.mark.slow
def test_c4_stopping_soundness(theorem_trials):
    check = stopping_check(theorem_trials, LIGHT)
    strict = stopping_check(theorem_trials, LIGHT, first_m=True)
    report(4, check.passed, f"(K0=10, alpha0=0.01, tail=1000), config (0.1, 0.05, 0.05, 2): {check.line()}; "
                            f"first-M variant {strict.failures}/{strict.trials}")
    assert check.passed


@pytest.mark.slow
def test_c5_sample_complexity(theorem_trials):
    check = complexity_check(theorem_trials, LIGHT, 10, 0.01, 0.05)
    bound = low_complexity_bound(LIGHT.alpha, 0.01, 10, 0.05)
    Ms = [o.M for o in theorem_trials]
    report(5, check.passed, f"bound M <= {bound:.1f}, observed M in [{min(Ms)}, {max(Ms)}]: {check.line()}")
    assert check.passed


def test_c6_lp_oracle():
    rng = np.random.default_rng(20240601)
    mismatches = status_bad = 0
    for t in range(500):
        n = int(rng.integers(1, 7))
        extra = int(rng.integers(0, 12 - n))
        inst = random_polytope_lp(rng, n, extra, infeasible=(t % 10 == 0))
        assert inst.m <= 12
        sol = solve_lp(inst)
        verts = enumerate_vertices(inst)
        ref = linprog(inst.cost, A_ub=inst.ineq_matrix, b_ub=inst.ineq_rhs,
                      bounds=[(None, None)] * n, method="highs")
        expect = Status.OPTIMAL if verts else Status.INFEASIBLE
        if sol.status is not expect or (ref.status == 0) != bool(verts):
            status_bad += 1
        elif verts and abs(sol.objective - verts[0][1]) > 1e-8:
            mismatches += 1
    ok = mismatches == 0 and status_bad == 0
    report(6, ok, f"500 random LPs (n<=6, m<=12): {mismatches} objective mismatches > 1e-8, "
                  f"{status_bad} status disagreements")
    assert ok


def test_c7_ptdf():
    rng = np.random.default_rng(77)
    worst = 0.0
    for _ in range(100):
        net = random_network(rng, int(rng.integers(2, 21)))
        p = rng.normal(size=len(net.buses))
        p -= p.mean()
        worst = max(worst, float(np.max(np.abs(build_ptdf(net).flows(p) - dc_power_flow(net, p)))))
    tri = build_ptdf(triangle(slack=3)).entries[:, 0]
    split_ok = np.allclose(tri, [1 / 3, 1 / 3, 2 / 3], atol=1e-15)
    ok = worst <= 1e-9 and split_ok
    report(7, ok, f"100 random networks (<=20 buses): max |PTDF - angle flows| = {worst:.2e}; "
                  f"triangle split {np.round(tri, 6).tolist()}")
    assert ok


@pytest.mark.slow
def test_c8_relaxation_dichotomy(case3, case5, case6):
    rng = np.random.default_rng(8)
    nets = [case3, case5, case6]
    progs = [build_dcopf(n) for n in nets]
    dists = [make_distribution(DistributionSpec(Kind.NORMAL, seed=8), n) for n in nets]
    # every key seen on a training stream, plus the keys of the test pairs themselves
    pairs = []
    for _ in range(1000):
        c = int(rng.integers(0, 3))
        idx = int(rng.integers(1, 10**9))
        pairs.append((c, draw(dists[c], idx)))
    solved, keys = [], [set() for _ in nets]
    infeasible = 0
    for c, s in pairs:
        try:
            sol, key = solve_for_sample(progs[c], s)
        except SampleInfeasible:
            infeasible += 1
            continue
        solved.append((c, s, sol, key))
        keys[c].add(key)
    relax_bad = dich_bad = candidates = 0
    for c, s, sol, key in solved:
        prog = progs[c]
        red = solve_lp(reduced_instance(prog, s, key, ReductionMode.AS_INEQUALITIES))
        if red.status is not Status.OPTIMAL or not objectives_match(red.objective, sol.objective):
            relax_bad += 1
        full = instantiate(prog, s)
        for other in keys[c] - {key}:
            candidates += 1
            cand = solve_lp(reduced_instance(prog, s, other, ReductionMode.AS_EQUALITIES))
            if cand.status is not Status.OPTIMAL:
                continue  # no candidate point, counts as infeasible
            if check_feasibility(full, cand.point).feasible and not objectives_match(cand.objective, sol.objective):
                dich_bad += 1
    ok = relax_bad == 0 and dich_bad == 0 and len(solved) + infeasible == 1000
    report(8, ok, f"{len(solved)} solved pairs ({infeasible} infeasible samples) over 3 cases, "
                  f"key counts {[len(k) for k in keys]}: {relax_bad} relaxation mismatches, "
                  f"{dich_bad} feasible-suboptimal among {candidates} wrong-key candidates")
    assert ok
