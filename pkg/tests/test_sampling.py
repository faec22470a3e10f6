from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from scipy import stats

from activeset.sampling import DistributionSpec, Kind, draw, make_distribution, uniforms

LOADS = [100.0, 0.0, 50.0]


def test_normal_dimension_and_sigma():
    d = make_distribution(DistributionSpec(Kind.NORMAL), loads=LOADS)
    assert d.dim == 2
    np.testing.assert_allclose(d.sigma, [3.0, 1.5])


def test_uniform_support():
    d = make_distribution(DistributionSpec(Kind.UNIFORM), loads=LOADS)
    draws = np.array([draw(d, i).values for i in range(1, 2001)])
    assert np.all(np.abs(draws) <= np.array([9.0, 4.5]))
    assert draws[:, 0].max() > 8.9 and draws[:, 0].min() < -8.9


def test_zero_sigma_is_point_mass():
    d = make_distribution(DistributionSpec(Kind.NORMAL, sigma_fraction=0.0), loads=LOADS)
    assert np.all(draw(d, 3).values == 0.0)


def test_spec_validation():
    with pytest.raises(ValueError):
        DistributionSpec(sigma_fraction=-0.1)
    with pytest.raises(ValueError):
        DistributionSpec(support_sigmas=0.0)
    assert DistributionSpec("uniform").kind is Kind.UNIFORM


def test_draw_determinism():
    d = make_distribution(DistributionSpec(seed=9), loads=LOADS)
    a, b = draw(d, 7), draw(d, 7)
    assert a.index == 7 and np.array_equal(a.values, b.values)
    assert not np.array_equal(draw(d, 7).values, draw(d, 8).values)
    other = make_distribution(DistributionSpec(seed=10), loads=LOADS)
    assert not np.array_equal(draw(d, 7).values, draw(other, 7).values)
    with pytest.raises(ValueError):
        draw(d, 0)


def test_uniforms_open_interval():
    u = uniforms(0, 1, 10000)
    assert u.min() > 0.0 and u.max() < 1.0


def test_order_independence():
    d = make_distribution(DistributionSpec(seed=4), loads=LOADS)
    forward = [draw(d, i).values.tobytes() for i in range(1, 201)]
    backward = [draw(d, i).values.tobytes() for i in range(200, 0, -1)][::-1]
    with ThreadPoolExecutor(4) as pool:
        parallel = [s.values.tobytes() for s in pool.map(lambda i: draw(d, i), range(1, 201))]
    assert forward == backward == parallel


@pytest.mark.parametrize("kind", [Kind.NORMAL, Kind.UNIFORM])
def test_marginals_ks(kind):
    d = make_distribution(DistributionSpec(kind, seed=2024), loads=LOADS)
    n = 100_000
    x = np.array([draw(d, i).values for i in range(1, n + 1)])
    for j, s in enumerate(d.sigma):
        if kind is Kind.NORMAL:
            ref = stats.norm(scale=s)
            assert abs(x[:, j].mean()) <= 4 * s / np.sqrt(n)
        else:
            ref = stats.uniform(loc=-3 * s, scale=6 * s)
        assert stats.kstest(x[:, j], ref.cdf).pvalue > 1e-3


def test_custom_transform():
    d = make_distribution(DistributionSpec(Kind.CUSTOM), loads=LOADS, transform=lambda u: 2 * u)
    v = draw(d, 1).values
    assert v.shape == (2,) and np.all((0 < v) & (v < 2))
    with pytest.raises(ValueError):
        make_distribution(DistributionSpec(Kind.CUSTOM), loads=LOADS)
