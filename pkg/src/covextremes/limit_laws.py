"""
Limiting distributions and samplers for the limit objects.

The point-process limit is the Poisson random measure with mean measure
``mu(x, inf) = exp(-x)``, realised as the points ``-log Gamma_i`` with
``Gamma_i`` the partial sums of iid standard exponentials.  The spacing laws
follow from the Renyi representation: ``log(Gamma_{i+1}/Gamma_i)`` are
independent ``Exp(i)`` variables.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cov_engine import IntervalUnion
from .distributions import NullModel, child_stream, quantile_a, sample_entries

__all__ = [
    "gumbel_cdf",
    "std_normal_cdf",
    "mu_measure",
    "f2k_cdf",
    "f3k_cdf",
    "QuantileTable",
    "build_f4k_table",
    "f4k_cdf",
    "default_f4k_table",
    "minuv_cdf",
    "poisson_pmf",
    "sample_limit_points",
    "sample_spacings",
    "fourth_power_oracle",
]

TABLE_GRID_SIZE = 4097
DEFAULT_TABLE_SAMPLES = 10**6
DEFAULT_TABLE_SEED = 20_230_901
_TABLE_STREAM = 2


def gumbel_cdf(x: float) -> float:
    return math.exp(-math.exp(-x)) if x > -700.0 else 0.0


def std_normal_cdf(x: float) -> float:
    # erfc keeps relative accuracy in the lower tail; error is at the ulp level.
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def mu_measure(u: IntervalUnion) -> float:
    """Mean measure ``sum (e^{-a} - e^{-b})`` of a union of intervals."""
    total = []
    for iv in u.intervals:
        if math.isinf(iv.lower):
            raise ValueError("infinite mean measure: interval unbounded below")
        total.append(math.exp(-iv.lower) - (0.0 if math.isinf(iv.upper) else math.exp(-iv.upper)))
    return math.fsum(total)


def _check_k(k: int) -> None:
    if k < 2:
        raise ValueError(f"spacing laws need k >= 2, got {k}")


def f2k_cdf(x: float, k: int) -> float:
    """CDF of ``log(Gamma_k / Gamma_1)``: ``(1 - e^{-x})^{k-1}``."""
    _check_k(k)
    if x <= 0:
        return 0.0
    return (-math.expm1(-x)) ** (k - 1)


def f3k_cdf(x: float, k: int) -> float:
    """CDF of the largest log-spacing ``max_i log(Gamma_{i+1}/Gamma_i)``, i < k."""
    _check_k(k)
    if x <= 0:
        return 0.0
    out = 1.0
    for i in range(1, k):
        out *= -math.expm1(-i * x)
    return out


@dataclass(frozen=True)
class QuantileTable:
    """Empirical quantiles of the sum of squared log-spacings for fixed k."""

    k: int
    sample_count: int
    seed: int
    probabilities: np.ndarray
    quantiles: np.ndarray

    def __post_init__(self):
        pr = np.asarray(self.probabilities, dtype=np.float64)
        q = np.asarray(self.quantiles, dtype=np.float64)
        object.__setattr__(self, "probabilities", pr)
        object.__setattr__(self, "quantiles", q)
        if pr.shape != q.shape or pr.ndim != 1 or pr.size == 0:
            raise ValueError("probabilities and quantiles must be equal-length 1-d arrays")
        if not (pr[0] > 0 and pr[-1] < 1 and np.all(np.diff(pr) > 0)):
            raise ValueError("probabilities must be strictly increasing in (0, 1)")
        if np.any(np.diff(q) < 0) or q[0] < 0:
            raise ValueError("quantiles must be nonnegative and non-decreasing")

    @property
    def grid(self) -> list[tuple[float, float]]:
        return list(zip(self.probabilities.tolist(), self.quantiles.tolist()))

    def cdf(self, x: float) -> float:
        return f4k_cdf(x, self)

    def save(self, path) -> None:
        lines = [f"f4k {self.k} {self.sample_count} {self.seed}"]
        lines += [f"{p!r}\t{q!r}" for p, q in zip(self.probabilities.tolist(), self.quantiles.tolist())]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "QuantileTable":
        lines = Path(path).read_text().splitlines()
        head = lines[0].split()
        if len(head) != 4 or head[0] != "f4k":
            raise ValueError(f"{path}: not an f4k table header: {lines[0]!r}")
        pairs = [ln.split("\t") for ln in lines[1:] if ln.strip()]
        pr = np.array([float(a) for a, _ in pairs])
        q = np.array([float(b) for _, b in pairs])
        return cls(int(head[1]), int(head[2]), int(head[3]), pr, q)


def sample_spacings(k: int, count: int, stream: np.random.Generator) -> np.ndarray:
    """``count x (k-1)`` array of ``log(Gamma_{i+1}/Gamma_i)``, i = 1..k-1."""
    gam = np.cumsum(stream.standard_exponential((count, k)), axis=1)
    return np.log(gam[:, 1:] / gam[:, :-1])


def _table_probabilities(sample_count: int) -> np.ndarray:
    body = np.arange(1, TABLE_GRID_SIZE - 1) / (TABLE_GRID_SIZE - 1)
    tail = np.array([1.0 - 16.0 / sample_count, 1.0 - 0.5 / sample_count])
    return np.concatenate([body, tail])


def build_f4k_table(k: int, sample_count: int = DEFAULT_TABLE_SAMPLES, seed: int = DEFAULT_TABLE_SEED) -> QuantileTable:
    """Monte Carlo quantile table for ``sum_i log(Gamma_{i+1}/Gamma_i)^2``.

    Quantiles are the order statistics ``x_(ceil(p m))`` of ``m = sample_count``
    draws on a 4097-point probability grid: 4095 equispaced levels plus two
    upper-tail levels so that the last knot sits at ``1 - 1/(2m)``.
    """
    _check_k(k)
    if sample_count < 10**5:
        raise ValueError("sample_count must be at least 1e5")
    stream = child_stream(seed, _TABLE_STREAM, k)
    draws = np.empty(sample_count)
    chunk = 1 << 17
    for start in range(0, sample_count, chunk):
        m = min(chunk, sample_count - start)
        d = sample_spacings(k, m, stream)
        draws[start : start + m] = np.sum(d * d, axis=1)
    draws.sort()
    probs = _table_probabilities(sample_count)
    idx = np.ceil(probs * sample_count).astype(np.int64) - 1
    return QuantileTable(k, sample_count, seed, probs, draws[np.clip(idx, 0, sample_count - 1)])


def f4k_cdf(x: float, table: QuantileTable) -> float:
    """Piecewise-linear CDF through ``(0, 0)`` and the table knots; 1 past the last knot."""
    if x <= 0:
        return 0.0
    q, pr = table.quantiles, table.probabilities
    if x >= q[-1]:
        return 1.0
    j = int(np.searchsorted(q, x, side="right"))
    # q[j-1] <= x < q[j]
    x0, p0 = (0.0, 0.0) if j == 0 else (q[j - 1], pr[j - 1])
    x1, p1 = q[j], pr[j]
    if x1 == x0:
        return float(p1)
    return float(p0 + (p1 - p0) * (x - x0) / (x1 - x0))


@functools.lru_cache(maxsize=32)
def default_f4k_table(k: int) -> QuantileTable:
    """Pinned 10^6-draw table used by the test pipeline (cached per process)."""
    return build_f4k_table(k, DEFAULT_TABLE_SAMPLES, DEFAULT_TABLE_SEED)


def minuv_cdf(x: float) -> float:
    """CDF of ``min(U, V)`` for independent uniforms."""
    if x <= 0:
        return 0.0
    if x >= 1:
        return 1.0
    return 2.0 * x - x * x


def poisson_pmf(j: int, lam: float) -> float:
    if j < 0:
        return 0.0
    if lam == 0:
        return 1.0 if j == 0 else 0.0
    return math.exp(j * math.log(lam) - lam - math.lgamma(j + 1))


def sample_limit_points(count: int, stream: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Largest ``count`` points ``-log Gamma_i`` of the limiting Poisson process.

    Returns a descending vector, or a ``size x count`` array when ``size`` is given.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    shape = (count,) if size is None else (size, count)
    return -np.log(np.cumsum(stream.standard_exponential(shape), axis=-1))


def fourth_power_oracle(model: NullModel, n: int, p: int, stream: np.random.Generator, size: int | None = None):
    """Draw ``a_{np}^{-4} sum X^4`` over ``n p`` fresh entries.

    This is the leading term of the centred Frobenius statistic in the
    infinite-fourth-moment regime, used as a two-sample reference because the
    location constant of the stable limit is not available in closed form.
    """
    alpha = model.alpha
    if alpha is None or not 2 < alpha < 4:
        raise ValueError(f"fourth_power_oracle needs a tail index in (2, 4), model is {model.spec()}")
    a = quantile_a(model, n * p)
    a4 = a ** 4

    def one():
        x = sample_entries(model, n * p, stream)
        x2 = x * x
        return float(np.sum(x2 * x2)) / a4

    if size is None:
        return one()
    return np.array([one() for _ in range(size)])

