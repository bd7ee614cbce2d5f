"""
Reproducible Monte Carlo experiments and the estimators that score them.

Replication ``i`` draws its data from ``child_stream(master_seed, 0, i)`` and
oracle draw ``i`` from ``child_stream(master_seed, 1, i)``.  Records are
merged in replication order, so every output is independent of the number
of worker processes.
"""
from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np
from scipy import special

from . import __version__
from . import limit_laws, statistics
from .cov_engine import DEFAULT_BLOCK, IntervalUnion, summarize
from .distributions import NullModel, child_stream, estimate_m4, exact_m4, quantile_a, sample_matrix

log = logging.getLogger(__name__)

EXPERIMENTS = ("clt", "pp", "joint", "stable", "size", "cor28")
_ALIASES = {"corollary28": "cor28"}
_POINT_PROCESS = ("pp", "joint", "size", "cor28")
_NEEDS_Z = ("clt", "joint", "size", "cor28")

DATA_STREAM = 0
ORACLE_STREAM = 1

KS_EXACT_LIMIT = 10**6
KS_GRID_POINTS = 10**4


class GrowthConditionWarning(UserWarning):
    """Dimension grows faster than the moment condition allows."""


@dataclass
class ExperimentConfig:
    experiment: str
    model: NullModel
    n: int
    p: int
    reps: int
    k: int = 1
    beta: float = 0.05
    unions: list[IntervalUnion] = field(default_factory=lambda: [IntervalUnion.of((0.0, math.inf))])
    thresholds: list[float] = field(default_factory=lambda: [-1.0, 0.0, 1.0])
    master_seed: int = 0
    m4_mode: Union[str, float] = "exact"
    trace_s: str = "data"
    oracle_reps: Optional[int] = None
    block: int = DEFAULT_BLOCK

    def __post_init__(self):
        self.experiment = _ALIASES.get(self.experiment, self.experiment)
        if isinstance(self.model, str):
            self.model = NullModel.parse(self.model)
        if isinstance(self.m4_mode, str) and self.m4_mode not in ("exact", "plugin"):
            self.m4_mode = float(self.m4_mode)
        self.unions = [IntervalUnion.parse(u) if isinstance(u, str) else u for u in self.unions]
        self.thresholds = [float(y) for y in self.thresholds]

    @property
    def n_oracle(self) -> int:
        return self.reps if self.oracle_reps is None else self.oracle_reps

    def validate(self) -> None:
        """Reject invalid combinations; warn when the growth condition fails."""
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}")
        if self.reps < 1 or self.n < 1 or self.p < 1:
            raise ValueError("reps, n and p must all be >= 1")
        if self.trace_s not in ("data", "expectation"):
            raise ValueError(f"trace_s must be 'data' or 'expectation', got {self.trace_s!r}")
        if not 0.0 <= self.beta < 1.0:
            raise ValueError(f"beta must lie in (0, 1), got {self.beta}")
        if isinstance(self.m4_mode, float) and not (self.m4_mode >= 1.0 and math.isfinite(self.m4_mode)):
            raise ValueError(f"explicit m4 must be finite and >= 1, got {self.m4_mode}")
        exp = self.experiment
        if exp in _POINT_PROCESS:
            if self.p < 3:
                raise ValueError(f"experiment {exp!r} needs p >= 3 for d_p")
            total = self.p * (self.p - 1) // 2
            if not 1 <= self.k <= total:
                raise ValueError(f"k must lie in [1, p(p-1)/2 = {total}], got {self.k}")
        if exp in ("pp", "joint"):
            if not self.unions:
                raise ValueError(f"experiment {exp!r} needs at least one interval union")
            for u in self.unions:
                limit_laws.mu_measure(u)
        if exp in _NEEDS_Z and self.m4_mode == "exact" and math.isinf(exact_m4(self.model)):
            raise ValueError(f"experiment {exp!r} needs a finite fourth moment; model {self.model.spec()} has none")
        if exp == "stable":
            a = self.model.alpha
            if a is None or not 2 < a < 4:
                raise ValueError(f"stable experiment needs a tail index in (2, 4), model is {self.model.spec()}")
        if exp in _POINT_PROCESS:
            s = self.model.moment_order
            if math.isfinite(s) and self.p > self.n ** ((s - 2.0) / 4.0):
                warnings.warn(
                    f"p={self.p} exceeds n^((s-2)/4)={self.n ** ((s - 2.0) / 4.0):.3g} for moment order s={s:g}; "
                    "limit theory not guaranteed in this regime",
                    GrowthConditionWarning,
                    stacklevel=2,
                )

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "model": self.model.spec(),
            "n": self.n,
            "p": self.p,
            "reps": self.reps,
            "k": self.k,
            "beta": self.beta,
            "unions": [";".join(f"{iv.lower!r},{iv.upper!r}" for iv in u.intervals) for u in self.unions],
            "thresholds": list(self.thresholds),
            "master_seed": self.master_seed,
            "m4_mode": self.m4_mode,
            "trace_s": self.trace_s,
            "oracle_reps": self.oracle_reps,
            "block": self.block,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        return cls(**d)


def _resolve_m4(config: ExperimentConfig, data: np.ndarray) -> float:
    if isinstance(config.m4_mode, float):
        return config.m4_mode
    if config.m4_mode == "plugin":
        return estimate_m4(data)
    return exact_m4(config.model)


def run_replication(config: ExperimentConfig, rep: int) -> dict:
    """One replication: sample, summarize, and reduce to a flat record."""
    exp = config.experiment
    x = sample_matrix(config.model, config.p, config.n, child_stream(config.master_seed, DATA_STREAM, rep))
    pp = exp in _POINT_PROCESS
    d_p = statistics.compute_dp(config.p) if pp else None
    unions = config.unions if exp in ("pp", "joint") else []
    s = summarize(x, k=config.k if pp else 0, unions=unions, d_p=d_p, block=config.block)

    z_n = None
    if exp != "stable":
        m4 = _resolve_m4(config, x)
        if math.isfinite(m4):
            z_n = statistics.z_statistic(s.trace_s2, config.n, config.p, m4)
    stable = None
    if exp == "stable":
        a_np = quantile_a(config.model, config.n * config.p)
        stable = statistics.stable_statistic(
            s.trace_s, s.trace_s2, config.n, config.p, a_np, expected_trace=config.trace_s == "expectation"
        )
    decisions = None
    if exp == "size":
        out = statistics.evaluate_tests(s.top_g, z_n, config.k, config.beta)
        decisions = out.decisions
    return {
        "rep": rep,
        "z_n": z_n,
        "g_top": s.top_g,
        "counts": s.interval_counts,
        "stable_stat": stable,
        "decisions": decisions,
        "trace_s": s.trace_s,
        "trace_s2": s.trace_s2,
    }


def _oracle_draw(config: ExperimentConfig, i: int) -> float:
    return limit_laws.fourth_power_oracle(config.model, config.n, config.p, child_stream(config.master_seed, ORACLE_STREAM, i))


def _replicate_chunk(args) -> list[dict]:
    config, reps = args
    return [run_replication(config, r) for r in reps]


def _oracle_chunk(args) -> list[float]:
    config, idx = args
    return [_oracle_draw(config, i) for i in idx]


def _chunks(count: int, workers: int) -> list[range]:
    size = max(1, min(256, count // max(1, workers * 4)))
    return [range(a, min(count, a + size)) for a in range(0, count, size)]


def _parallel(fn, config, count, workers, sink: Optional[Callable] = None) -> list:
    out = []
    jobs = [(config, r) for r in _chunks(count, workers)]
    if workers <= 1:
        results = map(fn, jobs)
        pool = None
    else:
        pool = ProcessPoolExecutor(max_workers=workers)
        results = pool.map(fn, jobs)
    try:
        for chunk in results:
            if sink is not None:
                sink(chunk)
            out.extend(chunk)
    finally:
        if pool is not None:
            pool.shutdown()
    return out


def oracle_draws(config: ExperimentConfig, workers: int = 1) -> Optional[np.ndarray]:
    """Reference draws from the limit object matching the experiment, if any."""
    m = config.n_oracle
    if config.experiment == "stable":
        return np.asarray(_parallel(_oracle_chunk, config, m, workers))
    if config.experiment == "cor28":
        stream = child_stream(config.master_seed, ORACLE_STREAM)
        return limit_laws.sample_limit_points(config.k, stream, size=m)
    return None


@dataclass
class EmpiricalSummary:
    config: ExperimentConfig
    records: list[dict]
    aggregates: dict[str, float]
    oracle: Optional[np.ndarray] = None
    provenance: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        return np.array([np.nan if r[name] is None else r[name] for r in self.records], dtype=np.float64)

    def g_matrix(self) -> np.ndarray:
        return np.array([r["g_top"] for r in self.records], dtype=np.float64).reshape(len(self.records), -1)

    def counts(self, index: int) -> np.ndarray:
        return np.array([r["counts"][index] for r in self.records], dtype=np.int64)


def run_experiment(config: ExperimentConfig, workers: int = 1, out_dir=None, oracle=None) -> EmpiricalSummary:
    """Run ``config.reps`` replications and aggregate them.

    With ``out_dir`` set, records are appended to ``records.jsonl`` in
    replication order as they complete, followed by the oracle draws, config,
    provenance and the summary tables.  ``oracle`` reuses reference draws from
    an earlier run with the same seed instead of regenerating them.
    """
    from . import dataio

    config.validate()
    writer = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        dataio.write_config(out_dir / "config.json", config)
        writer = dataio.RecordWriter(out_dir / "records.jsonl")
    try:
        records = _parallel(_replicate_chunk, config, config.reps, workers, sink=writer.extend if writer else None)
    finally:
        if writer is not None:
            writer.close()
    if oracle is None:
        oracle = oracle_draws(config, workers)
    summary = EmpiricalSummary(
        config=config,
        records=records,
        aggregates=aggregate(config, records, oracle),
        oracle=oracle,
        provenance=provenance(config),
    )
    if out_dir is not None:
        dataio.emit_summary(summary, out_dir, include_records=False)
    return summary


def provenance(config: ExperimentConfig) -> dict:
    return {
        "package_version": __version__,
        "numpy_version": np.__version__,
        "seed_rule": "PCG64(SeedSequence(master_seed, spawn_key=(stream, index)))",
        "data_stream": DATA_STREAM,
        "oracle_stream": ORACLE_STREAM,
        "master_seed": config.master_seed,
        "rep_seeds": "data: spawn_key=(0, rep) for rep in range(reps)",
    }


def _mean_z_ks(z: np.ndarray, agg: dict) -> None:
    z = z[np.isfinite(z)]
    if z.size:
        agg["z_mean"] = float(np.mean(z))
        agg["z_sd"] = float(np.std(z, ddof=1)) if z.size > 1 else 0.0
        agg["ks_z_normal"] = ks_statistic(z, _normal_cdf_vec)


def aggregate(config: ExperimentConfig, records: Sequence[dict], oracle=None) -> dict[str, float]:
    """Estimator table for an experiment; a pure function of its inputs."""
    if not records:
        raise ValueError("no records to aggregate")
    summ = EmpiricalSummary(config, list(records), {})
    agg: dict[str, float] = {"reps": float(len(records))}
    exp = config.experiment
    z = summ.column("z_n")
    tr2 = summ.column("trace_s2")
    agg["trace_s2_mean"] = float(np.mean(tr2))
    if exp in _NEEDS_Z:
        _mean_z_ks(z, agg)
        m4 = config.m4_mode if isinstance(config.m4_mode, float) else exact_m4(config.model)
        if math.isfinite(m4):
            agg["mu_n"] = statistics.mu_n(config.n, config.p, m4)
            agg["sigma_n"] = math.sqrt(statistics.sigma_n_sq(config.n, config.p, m4))
    if exp in _POINT_PROCESS:
        g = summ.g_matrix()
        agg["ks_g1_gumbel"] = ks_statistic(g[:, 0], _gumbel_cdf_vec)
    if exp in ("pp", "joint"):
        for m, u in enumerate(config.unions):
            lam = limit_laws.mu_measure(u)
            c = summ.counts(m)
            mean_gap, void_gap, chi2 = poisson_count_check(c, lam)
            agg[f"u{m}_lambda"] = lam
            agg[f"u{m}_count_mean"] = float(np.mean(c))
            agg[f"u{m}_mean_gap"] = mean_gap
            agg[f"u{m}_void_freq"] = float(np.mean(c == 0))
            agg[f"u{m}_void_gap"] = void_gap
            agg[f"u{m}_chi2"] = chi2
    if exp == "joint":
        for m in range(len(config.unions)):
            c = summ.counts(m)
            for y in config.thresholds:
                agg[f"indep_gap_y{y:g}_u{m}"] = independence_gap(z, c, y)
    if exp == "size":
        dec = np.array([r["decisions"] for r in records], dtype=bool)
        for i in range(4):
            rate = float(np.mean(dec[:, i]))
            agg[f"reject_rate_T{i + 1}"] = rate
            agg[f"reject_se_T{i + 1}"] = math.sqrt(rate * (1.0 - rate) / len(records))
        agg["threshold"] = statistics.rejection_threshold(config.beta)
    if exp == "stable":
        st = summ.column("stable_stat")
        agg["stable_median"] = float(np.median(st))
        if oracle is not None and len(oracle):
            agg["oracle_median"] = float(np.median(oracle))
            agg["ks_stable_oracle"] = two_sample_ks(st, oracle)
    if exp == "cor28" and oracle is not None:
        rep = top_points_check(summ.g_matrix(), z, np.asarray(oracle), config.thresholds, config.thresholds)
        agg.update(rep)
    return agg


def _normal_cdf_vec(x):
    return special.ndtr(np.asarray(x, dtype=np.float64))


def _gumbel_cdf_vec(x):
    return np.exp(-np.exp(-np.asarray(x, dtype=np.float64)))


def _apply_cdf(cdf, x: np.ndarray) -> np.ndarray:
    try:
        f = np.asarray(cdf(x), dtype=np.float64)
        if f.shape == x.shape:
            return f
    except (TypeError, ValueError):
        pass
    return np.array([cdf(float(v)) for v in x], dtype=np.float64)


def ks_statistic(samples: Iterable[float], cdf) -> float:
    """Kolmogorov distance between the empirical CDF of ``samples`` and ``cdf``.

    Exact sup over the sorted sample up to 10^6 points.  Larger samples are
    evaluated on a 10^4-point grid of sample quantiles, which can understate
    the sup by at most the largest CDF increment between adjacent grid points
    plus 10^-4.
    """
    x = np.sort(np.asarray(list(samples) if not isinstance(samples, np.ndarray) else samples, dtype=np.float64))
    m = x.size
    if m == 0:
        raise ValueError("ks_statistic needs at least one sample")
    if m > KS_EXACT_LIMIT:
        idx = np.unique(np.linspace(0, m - 1, KS_GRID_POINTS).astype(np.int64))
        xs = x[idx]
        f = _apply_cdf(cdf, xs)
        hi = np.searchsorted(x, xs, side="right") / m
        lo = np.searchsorted(x, xs, side="left") / m
        return float(max(np.max(hi - f), np.max(f - lo), 0.0))
    f = _apply_cdf(cdf, x)
    i = np.arange(1, m + 1)
    return float(max(np.max(i / m - f), np.max(f - (i - 1) / m)))


def two_sample_ks(a: Iterable[float], b: Iterable[float]) -> float:
    """Sup distance between two empirical CDFs."""
    a = np.sort(np.asarray(a, dtype=np.float64))
    b = np.sort(np.asarray(b, dtype=np.float64))
    if a.size == 0 or b.size == 0:
        raise ValueError("two_sample_ks needs two nonempty samples")
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def poisson_count_check(counts: Sequence[int], lam: float) -> tuple[float, float, float]:
    """Compare integer counts with ``Poisson(lam)``.

    Returns ``(|mean - lam|, |P(count = 0) - e^-lam|, chi2)``.  The chi-square
    uses cells ``0, 1, ...`` with a final upper-tail cell placed where the
    expected tail frequency drops below 5.
    """
    c = np.asarray(counts, dtype=np.int64)
    m = c.size
    if m == 0:
        raise ValueError("no counts")
    mean_gap = abs(float(np.mean(c)) - lam)
    void_gap = abs(float(np.mean(c == 0)) - math.exp(-lam))
    cells = []
    tail = 1.0
    j = 0
    while True:
        pj = limit_laws.poisson_pmf(j, lam)
        if m * (tail - pj) < 5.0:
            cells.append((j, None, tail))
            break
        cells.append((j, j, pj))
        tail -= pj
        j += 1
    chi2 = 0.0
    for lo, hi, prob in cells:
        observed = np.sum(c >= lo) if hi is None else np.sum(c == lo)
        expected = m * prob
        if expected > 0:
            chi2 += (observed - expected) ** 2 / expected
    return mean_gap, void_gap, float(chi2)


def independence_gap(z: Sequence[float], counts: Sequence[int], y: float) -> float:
    """``|P(Z <= y, N(U) = 0) - P(Z <= y) P(N(U) = 0)|`` from paired samples."""
    z = np.asarray(z, dtype=np.float64)
    c = np.asarray(counts)
    if z.shape != c.shape or z.size == 0:
        raise ValueError("z and counts must be nonempty and of equal length")
    a = z <= y
    b = c == 0
    return abs(float(np.mean(a & b)) - float(np.mean(a)) * float(np.mean(b)))


def top_points_check(
    g_top: np.ndarray,
    z: np.ndarray,
    oracle: np.ndarray,
    y_grid: Sequence[float],
    x_grid: Sequence[float],
) -> dict[str, float]:
    """Margins of ``(G_(1), ..., G_(k))`` against ``-log Gamma_i`` draws, plus
    the factorization gap ``|P(Z <= y, G_(1) <= x) - P(Z <= y) P(G_(1) <= x)|``."""
    g = np.asarray(g_top, dtype=np.float64)
    o = np.asarray(oracle, dtype=np.float64)
    if g.size == 0 or o.size == 0:
        raise ValueError("top_points_check needs nonempty records and oracle draws")
    if g.ndim == 1:
        g = g[:, None]
    if o.ndim == 1:
        o = o[:, None]
    k = min(g.shape[1], o.shape[1])
    out = {}
    for i in range(k):
        out[f"ks_margin_{i + 1}"] = two_sample_ks(g[:, i], o[:, i])
    z = np.asarray(z, dtype=np.float64)
    if z.size == g.shape[0] and np.all(np.isfinite(z)):
        for y in y_grid:
            for x in x_grid:
                a = z <= y
                b = g[:, 0] <= x
                out[f"joint_gap_y{y:g}_x{x:g}"] = abs(float(np.mean(a & b)) - float(np.mean(a)) * float(np.mean(b)))
    return out


def size_experiment(config: ExperimentConfig, workers: int = 1, out_dir=None) -> list[dict]:
    """Rejection frequencies of the four combined tests under the null."""
    if config.experiment != "size":
        raise ValueError("size_experiment needs a config with experiment='size'")
    summ = run_experiment(config, workers=workers, out_dir=out_dir)
    return [
        {
            "test": f"T{i}",
            "rate": summ.aggregates[f"reject_rate_T{i}"],
            "se": summ.aggregates[f"reject_se_T{i}"],
            "beta": config.beta,
        }
        for i in range(1, 5)
    ]


def trace_variant_gap(model: NullModel, n: int, p: int, reps: int, seed: int, quantile: float = 0.99) -> float:
    """Empirical quantile of |stable statistic with tr(S) minus with E tr(S) = p|."""
    a_np = quantile_a(model, n * p)
    diffs = np.empty(reps)
    for r in range(reps):
        x = sample_matrix(model, p, n, child_stream(seed, DATA_STREAM, r))
        s = summarize(x)
        observed = statistics.stable_statistic(s.trace_s, s.trace_s2, n, p, a_np)
        expected = statistics.stable_statistic(s.trace_s, s.trace_s2, n, p, a_np, expected_trace=True)
        diffs[r] = observed - expected
    return float(np.quantile(np.abs(diffs), quantile))
