import numpy as np
import pytest

from activeset import bundled_case, build_dcopf, load_network
from activeset.dcopf import Branch, Bus, Generator, Network


def _load(name):
    with __import__("importlib").resources.as_file(bundled_case(name)) as p:
        return load_network(p)


@pytest.fixture(scope="session")
def case3():
    return _load("case3_demo.m")


@pytest.fixture(scope="session")
def case5():
    return _load("case5_demo.m")


@pytest.fixture(scope="session")
def case6():
    return _load("case6_congested.json")


@pytest.fixture(scope="session")
def case6_program(case6):
    return build_dcopf(case6)


def random_network(rng, nb, with_limits=False):
    """Connected network: random spanning tree plus a few extra branches."""
    buses = [Bus(i + 1, float(rng.uniform(0, 100)) if rng.random() < 0.7 else 0.0) for i in range(nb)]
    branches = []
    for i in range(1, nb):
        j = int(rng.integers(0, i))
        branches.append(Branch(j + 1, i + 1, float(rng.uniform(0.05, 1.0)),
                               float(rng.uniform(20, 200)) if with_limits else 0.0))
    for _ in range(int(rng.integers(0, nb))):
        a, b = rng.choice(nb, size=2, replace=False)
        branches.append(Branch(int(a) + 1, int(b) + 1, float(rng.uniform(0.05, 1.0)),
                               float(rng.uniform(20, 200)) if with_limits else 0.0))
    total = sum(b.load_mw for b in buses)
    ng = int(rng.integers(1, min(nb, 4) + 1))
    gbus = rng.choice(nb, size=ng, replace=False)
    gens = [Generator(int(b) + 1, 0.0, float(1.5 * total / ng + 50), float(rng.uniform(1, 50))) for b in gbus]
    return Network(tuple(buses), tuple(gens), tuple(branches), 100.0, int(rng.integers(1, nb + 1)))


def triangle(slack=3):
    buses = (Bus(1, 0.0), Bus(2, 0.0), Bus(3, 0.0))
    branches = (Branch(1, 2, 1.0, 0.0), Branch(2, 3, 1.0, 0.0), Branch(1, 3, 1.0, 0.0))
    gens = (Generator(1, 0.0, 10.0, 1.0),)
    return Network(buses, gens, branches, 100.0, slack)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def report(criterion, passed, detail):
    """Record one acceptance verdict; printed again in the terminal summary."""
    line = f"{'PASS' if passed else 'FAIL'} [{criterion}] {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
