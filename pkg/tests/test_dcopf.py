import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from activeset import build_dcopf, build_ptdf, dc_power_flow, parse_network
from activeset.dcopf import Branch, Bus, Generator, Network, dispatch_mw
from activeset.errors import (
    DisconnectedNetwork,
    ParseError,
    SampleInfeasible,
    UnbalancedInjection,
    UnsupportedFeature,
)
from activeset.parametric import Sample, solve_for_sample
from conftest import random_network, triangle

MINI = """
function mpc = mini
mpc.baseMVA = 100;
mpc.bus = [
	1	3	0	0	0	0	1	1	0	230	1	1.1	0.9;
	2	1	60	0	0	0	1	1	0	230	1	1.1	0.9;
	3	1	40	0	0	0	1	1	0	230	1	1.1	0.9;
];
mpc.gen = [
	1	0	0	0	0	1	100	1	150	10;
	2	0	0	0	0	1	100	1	80	0;
];
mpc.branch = [
	1	2	0	0.1	0	40	0	0	0	0	1	-360	360;
	2	3	0	0.2	0	0	0	0	0	0	1	-360	360;
	1	3	0	0.2	0	0	0	0	0	0	1	-360	360;
];
mpc.gencost = [
	2	0	0	2	12	0;
	2	0	0	3	%s	25	0;
];
"""


def test_parse_counts():
    net = parse_network(MINI % "0", "matpower")
    assert (len(net.buses), len(net.generators), len(net.branches)) == (3, 2, 3)
    assert net.slack_bus == 1
    assert net.generators[0] == Generator(1, 10.0, 150.0, 12.0)
    assert net.branches[0].rate_mw == 40.0
    assert net.warnings == ()


def test_parse_quadratic_warning():
    net = parse_network(MINI % "0.01", "matpower")
    assert net.generators[1].cost_per_mwh == 25.0
    assert len(net.warnings) == 1


def test_parse_missing_bus():
    text = (MINI % "0").replace("2	3	0	0.2", "2	9	0	0.2")
    with pytest.raises(ParseError) as info:
        parse_network(text, "matpower")
    assert "row 2" in str(info.value)
    assert info.value.line is not None


def test_parse_rejects_phase_shift_and_skips_out_of_service():
    shifted = (MINI % "0").replace("1	2	0	0.1	0	40	0	0	0	0	1", "1	2	0	0.1	0	40	0	0	0	5	1")
    with pytest.raises(UnsupportedFeature):
        parse_network(shifted, "matpower")
    off = (MINI % "0").replace("1	3	0	0.2	0	0	0	0	0	0	1", "1	3	0	0.2	0	0	0	0	0	0	0")
    assert len(parse_network(off, "matpower").branches) == 2


def test_disconnected():
    buses = (Bus(1, 0.0), Bus(2, 10.0), Bus(3, 0.0))
    with pytest.raises(DisconnectedNetwork):
        Network(buses, (Generator(1, 0, 50, 1),), (Branch(1, 2, 0.1, 0),), 100.0, 1)


def test_json_round_trip(case6):
    again = parse_network(case6.to_json(), "json")
    assert again == case6
    rng = np.random.default_rng(5)
    for _ in range(10):
        net = random_network(rng, int(rng.integers(2, 12)), with_limits=True)
        assert parse_network(net.to_json(), "json") == net


def test_ptdf_triangle_exact():
    net = triangle(slack=3)
    ptdf = build_ptdf(net)
    # exact oracle: reduced susceptance system in rational arithmetic
    B = sympy.Matrix([[2, -1], [-1, 2]])  # buses 1, 2 with bus 3 removed
    theta = B.solve(sympy.Matrix([1, 0]))
    th = [theta[0], theta[1], 0]
    exact = [th[0] - th[1], th[1] - th[2], th[0] - th[2]]  # lines 1-2, 2-3, 1-3
    assert exact == [sympy.Rational(1, 3), sympy.Rational(1, 3), sympy.Rational(2, 3)]
    np.testing.assert_allclose(ptdf.entries[:, 0], [float(v) for v in exact], atol=1e-15)
    np.testing.assert_array_equal(ptdf.entries[:, 2], 0.0)
    np.testing.assert_allclose(dc_power_flow(net, [1.0, 0.0, -1.0]), [1 / 3, 1 / 3, 2 / 3], atol=1e-15)


def test_ptdf_two_bus():
    net = Network((Bus(1, 0.0), Bus(2, 5.0)), (Generator(1, 0, 10, 1),), (Branch(1, 2, 0.37, 0),), 100.0, 2)
    np.testing.assert_allclose(build_ptdf(net).entries, [[1.0, 0.0]])


def test_power_flow_examples():
    net = triangle()
    np.testing.assert_array_equal(dc_power_flow(net, np.zeros(3)), 0.0)
    with pytest.raises(UnbalancedInjection):
        dc_power_flow(net, [0.1, 0.0, 0.0])


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 20), st.integers(0, 2**32 - 1))
def test_ptdf_matches_angle_flows(nb, seed):
    rng = np.random.default_rng(seed)
    net = random_network(rng, nb)
    ptdf = build_ptdf(net)
    assert np.all(ptdf.entries[:, net.bus_index[net.slack_bus]] == 0.0)
    p = rng.normal(size=nb)
    p -= p.mean()
    np.testing.assert_allclose(ptdf.flows(p), dc_power_flow(net, p), atol=1e-9, rtol=0)
    q = rng.normal(size=nb)
    q -= q.mean()
    np.testing.assert_allclose(ptdf.flows(p + q), ptdf.flows(p) + ptdf.flows(q), atol=1e-12)


def test_row_count(case5, case6):
    for net in (case5, case6):
        prog = build_dcopf(net)
        limited = sum(1 for br in net.branches if br.rate_mw > 0)
        assert prog.m == 2 * len(net.generators) + 2 * limited
        assert prog.sample_dim == int(np.count_nonzero(net.loads_mw))


def hand_assembled_opf(net, omega_mw):
    """The DC-OPF LP written out directly in MW, solved by linprog as an independent oracle."""
    ptdf = build_ptdf(net).entries
    idx = net.bus_index
    H = np.zeros((len(net.buses), len(net.generators)))
    for g, gen in enumerate(net.generators):
        H[idx[gen.bus], g] = 1.0
    w = np.zeros(len(net.buses))
    unc = net.uncertain_buses()
    w[unc] = omega_mw
    d = net.loads_mw
    lim = [k for k, br in enumerate(net.branches) if br.rate_mw > 0]
    rate = np.array([net.branches[k].rate_mw for k in lim])
    M = ptdf[lim] @ H
    off = ptdf[lim] @ (-d + w)
    A = np.vstack([M, -M])
    b = np.concatenate([rate - off, rate + off])
    res = linprog([g.cost_per_mwh for g in net.generators], A_ub=A, b_ub=b,
                  A_eq=np.ones((1, len(net.generators))), b_eq=[d.sum() - w.sum()],
                  bounds=[(g.pmin_mw, g.pmax_mw) for g in net.generators], method="highs")
    return res


@pytest.mark.parametrize("name", ["case3", "case5", "case6"])
def test_dispatch_matches_independent_solver(name, request):
    net = request.getfixturevalue(name)
    prog = build_dcopf(net)
    rng = np.random.default_rng(2)
    sigma = 0.03 * net.loads_mw[net.uncertain_buses()]
    for i in range(10):
        om = np.zeros(prog.sample_dim) if i == 0 else rng.normal(scale=sigma)
        sol, _ = solve_for_sample(prog, Sample(om, i + 1))
        ref = hand_assembled_opf(net, om)
        assert ref.status == 0
        assert sol.objective == pytest.approx(ref.fun, rel=1e-8)
        p = dispatch_mw(prog, sol.point)
        assert np.all(p >= np.array([g.pmin_mw for g in net.generators]) - 1e-6)


def test_case3_nominal_dispatch(case3):
    prog = build_dcopf(case3)
    sol, key = solve_for_sample(prog, Sample(np.zeros(prog.sample_dim), 1))
    ref = hand_assembled_opf(case3, np.zeros(prog.sample_dim))
    np.testing.assert_allclose(dispatch_mw(prog, sol.point), ref.x, atol=1e-6)


def test_capacity_violation_is_infeasible(case5):
    prog = build_dcopf(case5)
    extra = sum(g.pmax_mw for g in case5.generators)
    with pytest.raises(SampleInfeasible):
        solve_for_sample(prog, Sample(np.full(prog.sample_dim, extra), 3))
