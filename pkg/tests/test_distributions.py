import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from covextremes.distributions import (
    MomentProfile,
    NullModel,
    Variant,
    child_stream,
    estimate_m4,
    exact_m4,
    quantile_a,
    sample_entries,
    sample_matrix,
    standardize_rows,
)

FINITE_VARIANCE = [NullModel.normal(), NullModel.bernoulli(), NullModel.student_t(8), NullModel.pareto(5.0)]
FINITE_M4 = [NullModel.normal(), NullModel.bernoulli(), NullModel.student_t(8), NullModel.student_t(10)]


def test_bernoulli_support(stream):
    x = sample_matrix(NullModel.bernoulli(), 2, 3, stream)
    assert x.shape == (2, 3)
    assert set(np.unique(x)) <= {-1.0, 1.0}


def test_normal_grand_mean(stream):
    x = sample_matrix(NullModel.normal(), 50, 100, stream)
    assert abs(x.mean()) < 0.05


def test_pareto_support_bounded_below_by_scale(stream):
    model = NullModel.pareto(3.0)
    assert model.scale == pytest.approx(math.sqrt(1 / 3), rel=1e-15)
    x = sample_matrix(model, 40, 50, stream)
    assert np.all(np.abs(x) >= model.scale)


@pytest.mark.parametrize("model", FINITE_VARIANCE, ids=lambda m: m.spec())
def test_standardized_mean_and_variance(model):
    x = sample_entries(model, 10**6, child_stream(7, 1))
    m = x.size
    # 5 standard errors; the variance SE uses the fourth moment
    assert abs(x.mean()) < 5 / math.sqrt(m)
    m4 = exact_m4(model) if math.isfinite(exact_m4(model)) else np.mean(x**4)
    assert abs(np.mean(x * x) - 1.0) < 5 * math.sqrt((m4 - 1) / m) + 1e-12


@pytest.mark.parametrize("model", FINITE_M4, ids=lambda m: m.spec())
def test_exact_m4_matches_monte_carlo(model):
    x = sample_entries(model, 10**6, child_stream(8, 2))
    x4 = x**4
    se = x4.std() / math.sqrt(x4.size)
    assert abs(x4.mean() - exact_m4(model)) < 5 * se + 1e-12


def test_exact_m4_values():
    assert exact_m4(NullModel.normal()) == 3.0
    assert exact_m4(NullModel.bernoulli()) == 1.0
    assert exact_m4(NullModel.student_t(8)) == pytest.approx(4.5, rel=1e-15)
    assert math.isinf(exact_m4(NullModel.pareto(3.0)))
    assert math.isinf(exact_m4(NullModel.student_t(4)))


def test_pareto_m4_against_integral():
    # E[Y^4] for P(Y > y) = y^-a on [1, inf), scaled to unit variance
    a = 6.0
    model = NullModel.pareto(a)
    ey2 = a / (a - 2)
    ey4 = a / (a - 4)
    assert exact_m4(model) == pytest.approx(ey4 / ey2**2, rel=1e-14)


def test_m4_at_least_one_and_one_only_for_bernoulli():
    for model in FINITE_M4 + [NullModel.pareto(4.5)]:
        m4 = exact_m4(model)
        assert m4 >= 1.0
        assert (m4 == 1.0) == (model.variant is Variant.BERNOULLI)


def test_moment_profile_rejects_m4_below_one():
    with pytest.raises(ValueError):
        MomentProfile(m4=0.9)
    prof = NullModel.pareto(3.0).profile()
    assert prof.alpha == 3.0 and math.isinf(prof.m4)
    assert prof.a_scale == pytest.approx(math.sqrt(1 / 3))


@pytest.mark.parametrize("bad", ["t:2", "t:1.5", "pareto:2", "pareto:-1", "cauchy", "t", "pareto:x"])
def test_parse_rejects_invalid_models(bad):
    with pytest.raises(ValueError):
        NullModel.parse(bad)


@pytest.mark.parametrize("spec", ["normal", "bernoulli", "t:8", "pareto:3", "pareto:2.5"])
def test_parse_round_trip(spec):
    assert NullModel.parse(NullModel.parse(spec).spec()) == NullModel.parse(spec)


def test_estimate_m4_signs():
    x = np.array([[1.0, -1.0, 1.0, -1.0], [-1.0, -1.0, 1.0, 1.0]])
    assert estimate_m4(x) == 1.0


def test_estimate_m4_hand_computation():
    # standardized to {sqrt2, -sqrt2, 0, 0}; mean of fourth powers {4, 4, 0, 0}
    assert estimate_m4(np.array([[2.0, -2.0, 0.0, 0.0]])) == pytest.approx(2.0, rel=1e-15)


def test_estimate_m4_clamps_at_one():
    # two-point rows standardize to +-1 exactly; rounding must not push below 1
    assert estimate_m4(np.array([[3.0, 5.0, 3.0, 5.0]])) >= 1.0


def test_constant_variable_is_degenerate():
    with pytest.raises(ValueError, match="degenerate variable"):
        estimate_m4(np.array([[1.0, 2.0, 3.0], [4.0, 4.0, 4.0]]))


def test_standardize_rows_unit_variance(stream):
    z = standardize_rows(stream.normal(3.0, 2.0, size=(5, 200)))
    np.testing.assert_allclose(z.mean(axis=1), 0.0, atol=1e-14)
    np.testing.assert_allclose((z**2).mean(axis=1), 1.0, rtol=1e-13)


def test_quantile_a_pareto_exact():
    model = NullModel.pareto(3.0)
    assert quantile_a(model, 1000) == pytest.approx(math.sqrt(1 / 3) * 10, rel=1e-14)
    assert quantile_a(model, 1) == pytest.approx(math.sqrt(1 / 3), rel=1e-15)


def test_quantile_a_undefined_for_light_tails():
    with pytest.raises(ValueError, match="undefined"):
        quantile_a(NullModel.normal(), 10)
    with pytest.raises(ValueError):
        quantile_a(NullModel.student_t(8), 10)


@pytest.mark.parametrize("k", [2, 10, 100])
def test_pareto_quantile_is_the_infimum(k):
    model = NullModel.pareto(3.0)
    a = quantile_a(model, k)

    def tail(x):
        return (x / model.scale) ** -3.0

    assert tail(a) <= 1 / k * (1 + 1e-12)
    assert tail(a * (1 - 1e-9)) > 1 / k
    # direct tail counting on simulated entries, 5 binomial SE
    x = np.abs(sample_entries(model, 10**6, child_stream(3, k)))
    freq = np.mean(x > a)
    assert abs(freq - 1 / k) < 5 * math.sqrt((1 / k) * (1 - 1 / k) / x.size)


@pytest.mark.parametrize("dof", [2.5, 3.0, 3.5])
def test_quantile_a_student_t_matches_tail(dof):
    from scipy import stats

    model = NullModel.student_t(dof)
    for k in (10, 1000, 10**6):
        a = quantile_a(model, k)
        assert 2 * stats.t.sf(a / model.scale, dof) == pytest.approx(1 / k, rel=1e-9)


def test_child_stream_is_reproducible_and_keyed():
    a = child_stream(42, 0, 5).random(4)
    b = child_stream(42, 0, 5).random(4)
    c = child_stream(42, 0, 6).random(4)
    d = child_stream(43, 0, 5).random(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)


@settings(max_examples=30, deadline=None)
@given(
    seed=st.integers(0, 2**64 - 1),
    p=st.integers(1, 8),
    n=st.integers(1, 8),
    spec=st.sampled_from(["normal", "bernoulli", "t:5", "pareto:3"]),
)
def test_same_stream_state_gives_identical_matrix(seed, p, n, spec):
    model = NullModel.parse(spec)
    x = sample_matrix(model, p, n, child_stream(seed, 0, 1))
    y = sample_matrix(model, p, n, child_stream(seed, 0, 1))
    assert x.shape == (p, n) and x.flags.c_contiguous
    assert x.tobytes() == y.tobytes()


def test_sample_matrix_rejects_empty_shapes(stream):
    with pytest.raises(ValueError):
        sample_matrix(NullModel.normal(), 0, 3, stream)
