import math
import warnings

import numpy as np
import pytest
from scipy import special

from covextremes import dataio, limit_laws
from covextremes.distributions import NullModel, child_stream
from covextremes.harness import (
    ExperimentConfig,
    GrowthConditionWarning,
    aggregate,
    top_points_check,
    independence_gap,
    ks_statistic,
    poisson_count_check,
    run_experiment,
    run_replication,
    size_experiment,
    trace_variant_gap,
    two_sample_ks,
)


def cfg(**kw):
    base = dict(experiment="joint", model="normal", n=60, p=12, reps=12, k=3, master_seed=5)
    base.update(kw)
    return ExperimentConfig(**base)


@pytest.mark.parametrize(
    "kw,match",
    [
        (dict(experiment="bogus"), "unknown experiment"),
        (dict(experiment="stable", model="normal"), "tail index"),
        (dict(experiment="stable", model="pareto:5"), "tail index"),
        (dict(experiment="clt", model="pareto:3"), "finite fourth moment"),
        (dict(p=2), "p >= 3"),
        (dict(k=67), "k must lie"),
        (dict(k=0), "k must lie"),
        (dict(unions=["-inf,0"]), "infinite mean measure"),
        (dict(unions=[]), "at least one"),
        (dict(beta=1.0), "beta"),
        (dict(trace_s="mean"), "trace_s"),
        (dict(reps=0), "reps"),
        (dict(m4_mode=0.5), "m4"),
    ],
)
def test_invalid_configs_rejected(kw, match):
    with pytest.raises(ValueError, match=match):
        cfg(**kw).validate()


def test_plugin_m4_allows_heavy_tails_for_clt():
    cfg(experiment="clt", model="t:5", m4_mode="plugin").validate()


def test_alias_and_string_parsing():
    c = cfg(experiment="corollary28", model="t:6", unions=["0,inf;-inf,-5"], m4_mode="4.5")
    assert c.experiment == "cor28"
    assert c.model == NullModel.student_t(6)
    assert c.m4_mode == 4.5
    assert len(c.unions[0].intervals) == 2
    assert ExperimentConfig.from_dict(c.to_dict()) == c


def test_growth_condition_warns_not_errors():
    with pytest.warns(GrowthConditionWarning):
        cfg(model="t:5", n=100, p=50).validate()
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        cfg(model="normal", n=100, p=50).validate()
        cfg(model="t:12", n=10**4, p=10).validate()


def test_replication_is_a_pure_function_of_seed_and_index():
    c = cfg()
    assert run_replication(c, 3) == run_replication(c, 3)
    assert run_replication(c, 3) != run_replication(c, 4)


@pytest.mark.parametrize("experiment,model", [("joint", "normal"), ("stable", "pareto:3"), ("cor28", "bernoulli")])
def test_output_independent_of_worker_count(tmp_path, experiment, model):
    c = cfg(experiment=experiment, model=model, reps=30)
    a = run_experiment(c, workers=1, out_dir=tmp_path / "w1")
    b = run_experiment(c, workers=3, out_dir=tmp_path / "w3")
    assert a.records == b.records
    assert a.aggregates == b.aggregates
    for name in ("records.jsonl", "summary.csv", "summary.json", "config.json"):
        assert (tmp_path / "w1" / name).read_bytes() == (tmp_path / "w3" / name).read_bytes()
    if a.oracle is not None:
        assert (tmp_path / "w1" / "oracle.tsv").read_bytes() == (tmp_path / "w3" / "oracle.tsv").read_bytes()


def test_same_config_twice_gives_identical_files(tmp_path):
    c = cfg(experiment="size", reps=20, k=4)
    run_experiment(c, out_dir=tmp_path / "a")
    run_experiment(c, out_dir=tmp_path / "b")
    for f in (tmp_path / "a").iterdir():
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_records_persisted_one_per_rep(tmp_path):
    c = cfg(reps=17)
    s = run_experiment(c, out_dir=tmp_path)
    lines = (tmp_path / "records.jsonl").read_text().splitlines()
    assert len(lines) == 17 == len(s.records)
    assert [r["rep"] for r in dataio.read_records(tmp_path / "records.jsonl")] == list(range(17))


def test_single_rep_aggregates_equal_record():
    s = run_experiment(cfg(experiment="clt", reps=1))
    rec = s.records[0]
    assert s.aggregates["reps"] == 1
    assert s.aggregates["trace_s2_mean"] == rec["trace_s2"]
    assert s.aggregates["z_mean"] == rec["z_n"]


@pytest.mark.parametrize("experiment,model", [("joint", "normal"), ("stable", "pareto:3"), ("cor28", "normal"), ("size", "t:9")])
def test_reaggregation_is_idempotent(tmp_path, experiment, model):
    c = cfg(experiment=experiment, model=model, reps=25, n=200, p=10)
    s = run_experiment(c, out_dir=tmp_path)
    again = dataio.load_summary(tmp_path)
    assert again.config == c
    assert again.records == s.records
    assert again.aggregates == s.aggregates
    assert aggregate(c, s.records, s.oracle) == s.aggregates


def test_bernoulli_trace_mean():
    s = run_experiment(ExperimentConfig("clt", "bernoulli", n=4, p=2, reps=10**5, master_seed=3))
    assert s.aggregates["trace_s2_mean"] == pytest.approx(2.5, abs=0.02)


def test_ks_examples():
    assert ks_statistic([0.0], special.ndtr) == 0.5
    m = 200
    q = special.ndtri((np.arange(1, m + 1) - 0.5) / m)
    assert ks_statistic(q, special.ndtr) == pytest.approx(0.5 / m, rel=1e-9)
    x = child_stream(1).standard_normal(10**4)
    assert ks_statistic(x, special.ndtr) < 1.95 / 100
    # scalar-only cdf falls back to elementwise calls
    assert ks_statistic(x[:100], limit_laws.std_normal_cdf) == ks_statistic(x[:100], special.ndtr)
    with pytest.raises(ValueError):
        ks_statistic([], special.ndtr)


def test_ks_grid_mode_for_large_samples():
    x = child_stream(2).standard_normal(2 * 10**6)
    exact = float(np.max(np.abs(np.arange(1, x.size + 1) / x.size - special.ndtr(np.sort(x)))))
    approx = ks_statistic(x, special.ndtr)
    assert approx <= exact + 1e-12
    assert exact - approx < 2e-4


def test_two_sample_examples():
    a = child_stream(3).standard_normal(500)
    assert two_sample_ks(a, a) == 0.0
    assert two_sample_ks([0.0], [1.0]) == 1.0
    b = child_stream(4).standard_normal(10**4)
    c = child_stream(5).standard_normal(10**4)
    assert two_sample_ks(b, c) < 1.95 * math.sqrt(2 / 10**4)


def test_poisson_check_examples():
    assert poisson_count_check([0, 0, 0], 0.0)[:2] == (0.0, 0.0)
    mean_gap, void_gap, _ = poisson_count_check([0, 1, 2, 1], 1.0)
    assert mean_gap == 0.0
    assert void_gap == pytest.approx(abs(0.25 - math.exp(-1)), rel=1e-12)
    draws = child_stream(6).poisson(1.0, size=10**4)
    mean_gap, void_gap, chi2 = poisson_count_check(draws, 1.0)
    assert mean_gap < 0.03 and void_gap < 0.015
    assert chi2 < 20  # a handful of cells
    with pytest.raises(ValueError):
        poisson_count_check([], 1.0)


def test_independence_gap_examples():
    z = child_stream(7).standard_normal(100)
    assert independence_gap(z, np.zeros(100, dtype=int), 0.0) == 0.0
    assert independence_gap(z, child_stream(8).poisson(1.0, 100), 10.0) == 0.0
    a = child_stream(9).integers(0, 2, 10**4)
    b = child_stream(10).integers(0, 2, 10**4)
    assert independence_gap(a.astype(float), b, 0.5) < 0.02
    with pytest.raises(ValueError):
        independence_gap(z, np.zeros(5), 0.0)


def test_top_points_checks():
    o1 = limit_laws.sample_limit_points(3, child_stream(11), size=10**4)
    o2 = limit_laws.sample_limit_points(3, child_stream(12), size=10**4)
    out = top_points_check(o1, np.zeros(0), o2, [], [])
    assert all(out[f"ks_margin_{i}"] < 0.0276 for i in (1, 2, 3))
    gumbel = -np.log(-np.log(child_stream(13).random(10**4)))
    g1 = limit_laws.sample_limit_points(1, child_stream(14), size=10**4)
    assert top_points_check(g1, np.zeros(0), gumbel, [], [])["ks_margin_1"] < 0.0276
    with pytest.raises(ValueError):
        top_points_check(np.empty((0, 3)), np.zeros(0), o2, [], [])
    with pytest.raises(ValueError):
        aggregate(cfg(), [])


def test_size_zero_beta_never_rejects():
    rows = size_experiment(cfg(experiment="size", beta=0.0, reps=20, n=100, p=10))
    assert [r["rate"] for r in rows] == [0.0] * 4
    assert [r["test"] for r in rows] == ["T1", "T2", "T3", "T4"]
    with pytest.raises(ValueError):
        size_experiment(cfg(experiment="size", beta=1.0))


def test_size_experiment_reports_binomial_se():
    rows = size_experiment(cfg(experiment="size", reps=400, n=400, p=20, k=5))
    for r in rows:
        assert r["se"] == pytest.approx(math.sqrt(r["rate"] * (1 - r["rate"]) / 400))
        assert 0 <= r["rate"] <= 0.2


def test_trace_variant_gap_shrinks_with_n():
    # p/n fixed at 1/5; the 99th percentile of |difference| decays like n^(-1/3)
    model = NullModel.pareto(3.0)
    gaps = [trace_variant_gap(model, n, n // 5, reps=5000, seed=1) for n in (100, 200, 400)]
    assert gaps[0] > gaps[1] > gaps[2]


def test_joint_aggregates_present():
    s = run_experiment(cfg(unions=["0,inf", "1,inf"], reps=40, n=300, p=20))
    for m in (0, 1):
        for key in ("lambda", "count_mean", "mean_gap", "void_freq", "void_gap", "chi2"):
            assert f"u{m}_{key}" in s.aggregates
        for y in (-1, 0, 1):
            assert 0 <= s.aggregates[f"indep_gap_y{y}_u{m}"] <= 0.25
    assert s.aggregates["u1_lambda"] == pytest.approx(math.exp(-1))
