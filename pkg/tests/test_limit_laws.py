import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from covextremes import limit_laws as ll
from covextremes.cov_engine import Interval, IntervalUnion
from covextremes.distributions import NullModel, child_stream, quantile_a, sample_entries
from covextremes.harness import ks_statistic
from covextremes.statistics import rejection_threshold

SMALL_TABLE_SAMPLES = 10**5


@pytest.fixture(scope="module")
def small_table():
    return ll.build_f4k_table(3, SMALL_TABLE_SAMPLES, seed=11)


def test_gumbel_examples():
    assert ll.gumbel_cdf(0.0) == pytest.approx(math.exp(-1), rel=1e-15)
    assert ll.gumbel_cdf(-40.0) < 1e-300
    assert ll.gumbel_cdf(50.0) == pytest.approx(1.0)


@pytest.mark.parametrize("x", np.linspace(-5, 10, 31))
def test_gumbel_is_poisson_void_probability(x):
    assert ll.gumbel_cdf(x) == pytest.approx(math.exp(-ll.mu_measure(IntervalUnion.of((x, math.inf)))), rel=1e-15)


def normal_cdf_oracle(x):
    mpmath.mp.dps = 50
    density = lambda t: mpmath.exp(-t * t / 2) / mpmath.sqrt(2 * mpmath.pi)  # noqa: E731
    if x <= 0:
        return mpmath.quad(density, [-mpmath.inf, x])
    return 1 - mpmath.quad(density, [x, mpmath.inf])


@pytest.mark.parametrize("x", np.linspace(-9, 9, 25))
def test_normal_cdf_against_quadrature(x):
    ref = normal_cdf_oracle(mpmath.mpf(float(x)))
    assert abs(ll.std_normal_cdf(float(x)) - float(ref)) <= 1e-12
    if x < -2:
        # relative accuracy in the lower tail, where p-values live
        assert ll.std_normal_cdf(float(x)) == pytest.approx(float(ref), rel=1e-12)


def test_normal_cdf_examples():
    assert ll.std_normal_cdf(0.0) == 0.5
    assert ll.std_normal_cdf(1.959964) == pytest.approx(0.975, abs=1e-6)


@settings(max_examples=200, deadline=None)
@given(st.floats(-30, 30))
def test_normal_cdf_symmetry(x):
    assert ll.std_normal_cdf(-x) == pytest.approx(1 - ll.std_normal_cdf(x), abs=1e-14)


def test_mean_measure_examples():
    assert ll.mu_measure(IntervalUnion.of((0.0, math.inf))) == 1.0
    assert ll.mu_measure(IntervalUnion.of((0.0, math.log(2)))) == pytest.approx(0.5, rel=1e-15)
    assert ll.mu_measure(IntervalUnion()) == 0.0
    assert ll.mu_measure(IntervalUnion.of((0.0, 1.0), (2.0, 3.0))) == pytest.approx(
        1 - math.exp(-1) + math.exp(-2) - math.exp(-3)
    )
    with pytest.raises(ValueError, match="infinite"):
        ll.mu_measure(IntervalUnion.of((-math.inf, 0.0)))


def test_mean_measure_ignores_endpoint_openness():
    closed = IntervalUnion((Interval(0.0, 1.0, lower_open=False, upper_open=False),))
    assert ll.mu_measure(closed) == ll.mu_measure(IntervalUnion.of((0.0, 1.0)))


def test_spacing_cdf_examples():
    assert ll.f2k_cdf(math.log(2), 3) == pytest.approx(0.25, rel=1e-14)
    assert ll.f3k_cdf(math.log(2), 3) == pytest.approx(0.375, rel=1e-14)
    for k in (2, 3, 7):
        assert ll.f2k_cdf(0.0, k) == 0.0 and ll.f3k_cdf(0.0, k) == 0.0
    for x in (0.1, 1.0, 4.0):
        assert ll.f2k_cdf(x, 2) == pytest.approx(1 - math.exp(-x), rel=1e-14)
        assert ll.f3k_cdf(x, 2) == pytest.approx(1 - math.exp(-x), rel=1e-14)
    with pytest.raises(ValueError):
        ll.f2k_cdf(1.0, 1)
    with pytest.raises(ValueError):
        ll.f3k_cdf(1.0, 1)


@settings(max_examples=200, deadline=None)
@given(x=st.floats(-5, 60), k=st.integers(2, 40))
def test_max_spacing_dominates_sum(x, k):
    assert ll.f3k_cdf(x, k) >= ll.f2k_cdf(x, k) - 1e-15


@pytest.mark.parametrize("k", [2, 3, 5, 10])
def test_spacing_laws_against_gamma_ratio_oracle(k):
    m = 2 * 10**5
    gam = np.cumsum(child_stream(77, k).standard_exponential((m, k)), axis=1)
    logs = np.log(gam)
    # 1.95/sqrt(m) is the 0.999 Kolmogorov quantile
    bound = 1.95 / math.sqrt(m)
    assert ks_statistic(logs[:, -1] - logs[:, 0], lambda x: ll.f2k_cdf(x, k)) < bound
    assert ks_statistic(np.diff(logs, axis=1).max(axis=1), lambda x: ll.f3k_cdf(x, k)) < bound


def grid_scan(cdf, lo=-5.0, hi=80.0, points=2000):
    xs = np.linspace(lo, hi, points)
    values = np.array([cdf(float(x)) for x in xs])
    assert np.all(np.diff(values) >= -1e-15)
    assert values.min() >= 0 and values.max() <= 1
    return values


@pytest.mark.parametrize("k", [2, 3, 10])
def test_cdfs_are_valid_on_a_grid(k, small_table):
    for cdf in (ll.gumbel_cdf, ll.std_normal_cdf, ll.minuv_cdf, lambda x: ll.f2k_cdf(x, k), lambda x: ll.f3k_cdf(x, k)):
        values = grid_scan(cdf)
        assert values[0] < 1e-3 and values[-1] > 1 - 1e-3
    values = grid_scan(small_table.cdf, hi=float(small_table.quantiles[-1]) + 1.0)
    assert values[0] == 0.0 and values[-1] == 1.0


def test_f4k_default_table_k2_matches_closed_form():
    table = ll.default_f4k_table(2)
    assert table.sample_count == 10**6
    assert len(table.probabilities) == 4097
    assert ll.f4k_cdf(1.0, table) == pytest.approx(1 - math.exp(-1), abs=0.005)
    assert ll.f4k_cdf(0.0, table) == 0.0
    assert ll.f4k_cdf(float(table.quantiles[-1]), table) >= 1 - 1 / table.sample_count


def test_f4k_table_is_deterministic(small_table):
    again = ll.build_f4k_table(3, SMALL_TABLE_SAMPLES, seed=11)
    assert again.quantiles.tobytes() == small_table.quantiles.tobytes()
    assert again.probabilities.tobytes() == small_table.probabilities.tobytes()
    other = ll.build_f4k_table(3, SMALL_TABLE_SAMPLES, seed=12)
    assert other.quantiles.tobytes() != small_table.quantiles.tobytes()


def test_f4k_table_invariants(small_table):
    pr, q = small_table.probabilities, small_table.quantiles
    assert np.all(np.diff(pr) > 0) and pr[0] > 0 and pr[-1] < 1
    assert np.all(np.diff(q) >= 0)
    assert small_table.grid[0] == (float(pr[0]), float(q[0]))


def test_f4k_table_round_trip(tmp_path, small_table):
    path = tmp_path / "f4k_3.tsv"
    small_table.save(path)
    assert path.read_text().splitlines()[0] == f"f4k 3 {SMALL_TABLE_SAMPLES} 11"
    back = ll.QuantileTable.load(path)
    assert back.quantiles.tobytes() == small_table.quantiles.tobytes()
    assert back.probabilities.tobytes() == small_table.probabilities.tobytes()
    assert (back.k, back.sample_count, back.seed) == (3, SMALL_TABLE_SAMPLES, 11)


def test_f4k_table_preconditions():
    with pytest.raises(ValueError):
        ll.build_f4k_table(1, SMALL_TABLE_SAMPLES)
    with pytest.raises(ValueError):
        ll.build_f4k_table(3, 10**4)


def test_f4k_table_against_fresh_draws(small_table):
    d = ll.sample_spacings(3, 10**5, child_stream(5, 6))
    t4 = np.sum(d * d, axis=1)
    assert ks_statistic(t4, small_table.cdf) < 1.95 * math.sqrt(2 / 10**5)


def test_minuv_examples():
    assert ll.minuv_cdf(0.5) == 0.75
    assert ll.minuv_cdf(1.0) == 1.0
    # the six-digit threshold is itself rounded by about 3e-8
    assert ll.minuv_cdf(0.0253206) == pytest.approx(0.05, abs=1e-7)
    assert ll.minuv_cdf(1 - math.sqrt(0.95)) == pytest.approx(0.05, abs=1e-15)


@pytest.mark.parametrize("beta", [0.01, 0.05, 0.1])
def test_minuv_at_threshold_is_level(beta):
    assert abs(ll.minuv_cdf(rejection_threshold(beta)) - beta) <= 1e-12


def test_minuv_against_simulation():
    u = child_stream(1, 2).random((10**5, 2)).min(axis=1)
    assert ks_statistic(u, ll.minuv_cdf) < 1.95 / math.sqrt(10**5)


def test_poisson_pmf_examples():
    assert ll.poisson_pmf(0, 1.0) == pytest.approx(math.exp(-1), rel=1e-15)
    assert ll.poisson_pmf(2, 1.0) == pytest.approx(math.exp(-1) / 2, rel=1e-14)
    assert ll.poisson_pmf(0, 0.0) == 1.0 and ll.poisson_pmf(3, 0.0) == 0.0
    assert math.fsum(ll.poisson_pmf(j, 3.7) for j in range(80)) == pytest.approx(1.0, rel=1e-14)


def test_limit_points_decreasing(stream):
    pts = ll.sample_limit_points(6, stream, size=1000)
    assert pts.shape == (1000, 6)
    assert np.all(np.diff(pts, axis=1) < 0)
    assert ll.sample_limit_points(4, stream).shape == (4,)


def test_largest_limit_point_is_gumbel():
    g = ll.sample_limit_points(2, child_stream(3, 3), size=10**5)
    assert ks_statistic(g[:, 0], ll.gumbel_cdf) < 0.01
    assert np.mean(g[:, 1] > 0) == pytest.approx(1 - 2 * math.exp(-1), abs=0.01)


def test_fourth_power_oracle_preconditions(stream):
    for model in (NullModel.bernoulli(), NullModel.normal(), NullModel.pareto(5.0)):
        with pytest.raises(ValueError):
            ll.fourth_power_oracle(model, 10, 10, stream)


def test_fourth_power_oracle_positive(stream):
    model = NullModel.pareto(3.0)
    a = quantile_a(model, 1000)
    draws = ll.fourth_power_oracle(model, 100, 10, stream, size=50)
    assert np.all(draws >= 1000 * model.scale**4 / a**4)


def test_truncated_fourth_moment_karamata_rate():
    # np E[X^4 1{X^4 <= a^4}] / a^4 -> alpha / (4 - alpha) = 3; exact finite value 2.97
    model = NullModel.pareto(3.0)
    np_ = 10**6
    a = quantile_a(model, np_)
    stream = child_stream(2024, 7)
    means = []
    for _ in range(100):
        x4 = sample_entries(model, np_, stream) ** 4
        means.append(np.sum(x4[x4 <= a**4]) / a**4)
    assert np.mean(means) == pytest.approx(3.0, rel=0.10)
