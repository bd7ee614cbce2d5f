"""
Scalar statistics of the sample covariance matrix and the combined tests.

Sum-type side: the standardized Frobenius statistic ``Z_n`` (finite fourth
moment) and the stable-normalized statistic (tail index in (2, 4)).
Max-type side: the order statistics ``G_(1) >= G_(2) >= ...`` of the
normalized off-diagonal entries and the four statistics built from them.
The combined tests take ``min(P_Z, P_T)`` and reject below ``1 - sqrt(1 - beta)``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import limit_laws

__all__ = [
    "GaugedStatistics",
    "TestOutcome",
    "compute_dp",
    "mu_n",
    "sigma_n_sq",
    "z_statistic",
    "stable_statistic",
    "stable_decomposition",
    "normalize_g",
    "t_statistics",
    "p_transforms",
    "combined_tests",
    "rejection_threshold",
    "evaluate_tests",
]


@dataclass
class GaugedStatistics:
    z_n: Optional[float]
    g_top: list[float]
    stable_stat: Optional[float] = None

    def __post_init__(self):
        if any(a < b for a, b in zip(self.g_top, self.g_top[1:])):
            raise ValueError("g_top must be sorted in descending order")


@dataclass
class TestOutcome:
    p_t1: float
    p_t2k: float
    p_t3k: float
    p_t4k: float
    p_z: float
    beta: float
    threshold: float
    combined: list[float]
    decisions: list[bool]
    t1: float = math.nan
    t2k: float = math.nan
    t3k: float = math.nan
    t4k: float = math.nan
    z_n: float = math.nan
    k: int = 0
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("extras")
        return d


def compute_dp(p: int, exact_gaussian: bool = True) -> float:
    """Normalizing constant ``d_p`` for ``p~ = p(p-1)/2`` off-diagonal entries.

    ``d_p = sqrt(2 L) - (log L + log 4 pi) / (2 sqrt(2 L))`` with ``L = log p~``,
    the centering under which ``p~ P(N(0,1) > d_p + x/d_p) -> e^{-x}``.

    ``exact_gaussian=False`` uses ``2 sqrt(L)`` in the second denominator.
    That variant shifts the normalized entries upward by a term growing like
    ``log log p~`` (about 2.2 expected exceedances of 0 instead of 1 at
    ``p = 100``) and is kept only for comparison.
    """
    if p <= 2:
        raise ValueError(f"d_p undefined (log p~ <= 0) for p={p}; need p >= 3")
    lp = math.log(p * (p - 1) / 2.0)
    denom = 2.0 * math.sqrt(2.0 * lp) if exact_gaussian else 2.0 * math.sqrt(lp)
    return math.sqrt(2.0 * lp) - (math.log(lp) + math.log(4.0 * math.pi)) / denom


def _check_moment(n: int, p: int, m4: float) -> None:
    if n < 1 or p < 1:
        raise ValueError(f"need n >= 1 and p >= 1, got n={n}, p={p}")
    if math.isinf(m4):
        raise ValueError("CLT path requires finite fourth moment")
    if not m4 >= 1.0:
        raise ValueError(f"fourth moment must be >= 1, got {m4}")


def mu_n(n: int, p: int, m4: float) -> float:
    """``E[tr(S^2)] = (p/n)(n + m4 - 2) + p^2/n``."""
    _check_moment(n, p, m4)
    return (p / n) * (n + m4 - 2.0) + p * p / n


def sigma_n_sq(n: int, p: int, m4: float) -> float:
    _check_moment(n, p, m4)
    r = p / n
    return (r + 2.0 * r * r + r ** 3) * 4.0 * (m4 - 1.0) + 4.0 * r * r


def z_statistic(trace_s2: float, n: int, p: int, m4: float) -> float:
    return (trace_s2 - mu_n(n, p, m4)) / math.sqrt(sigma_n_sq(n, p, m4))


def stable_statistic(
    trace_s: float,
    trace_s2: float,
    n: int,
    p: int,
    a_np: float,
    expected_trace: bool = False,
) -> float:
    """Frobenius statistic centred and scaled for a tail index in (2, 4).

    ``(n^2 tr(S^2) - 2n(n+p-2) tr(S) + np(n+p-2)) / a_np^4``.  With
    ``expected_trace`` the observed ``tr(S)`` is replaced by its mean ``p``.
    """
    if not a_np > 0:
        raise ValueError(f"a_np must be positive, got {a_np}")
    tr = float(p) if expected_trace else trace_s
    c = n + p - 2.0
    return math.fsum((n * n * trace_s2, -2.0 * n * c * tr, n * p * c)) / a_np ** 4


def stable_decomposition(data, a_np: float) -> tuple[float, float, float, float]:
    """Split the stable statistic into the fourth-power sum and three remainders.

    Returns ``(main, v1, v2, v3)`` with ``main = a^-4 sum X^4`` and

    * ``v1 = 2 a^-4 sum_{i<j} sum_t (X_it^2 - 1)(X_jt^2 - 1)`` (across variables),
    * ``v2 = 2 a^-4 sum_i sum_{t<u} (X_it^2 - 1)(X_iu^2 - 1)`` (across observations),
    * ``v3 = 2 a^-4 sum_{i<j} sum_{t != u} X_it X_jt X_iu X_ju``.

    Each pair sum is evaluated as ``(sum)^2 - sum of squares``.
    """
    if not a_np > 0:
        raise ValueError(f"a_np must be positive, got {a_np}")
    x = np.asarray(data, dtype=np.float64)
    a4 = a_np ** 4
    x2 = x * x
    x4 = x2 * x2
    y = x2 - 1.0
    main = math.fsum(x4.ravel())
    v1 = math.fsum(y.sum(axis=0) ** 2) - math.fsum((y * y).ravel())
    v2 = math.fsum(y.sum(axis=1) ** 2) - math.fsum((y * y).ravel())
    gram = x @ x.T
    off = gram ** 2
    np.fill_diagonal(off, 0.0)
    same_t = math.fsum(x2.sum(axis=0) ** 2) - main
    v3 = math.fsum(off.ravel()) - same_t
    return main / a4, v1 / a4, v2 / a4, v3 / a4


def normalize_g(s_ij, n: int, d_p: float):
    """``d_p (sqrt(n) s_ij - d_p)``; works elementwise on arrays."""
    return d_p * (math.sqrt(n) * s_ij - d_p)


def t_statistics(g_top: Sequence[float], k: int) -> tuple[float, float, float, float]:
    """``(T1, T2k, T3k, T4k)`` from the k largest normalized entries.

    For ``k == 1`` the spacing statistics are 0 by convention.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(g_top) < k:
        raise ValueError(f"need at least k={k} order statistics, got {len(g_top)}")
    g = [float(v) for v in g_top[:k]]
    if k == 1:
        return g[0], 0.0, 0.0, 0.0
    gaps = [a - b for a, b in zip(g, g[1:])]
    return g[0], g[0] - g[-1], max(gaps), math.fsum(d * d for d in gaps)


def _unit(x: float) -> float:
    return min(1.0, max(0.0, x))


def p_transforms(
    t: Sequence[float],
    z_n: float,
    k: int,
    table: Optional[limit_laws.QuantileTable] = None,
) -> tuple[float, float, float, float, float]:
    """Upper-tail p-values ``(p_t1, p_t2k, p_t3k, p_t4k, p_z)``.

    ``table`` overrides the pinned Monte Carlo table for the squared-spacing law.
    """
    t1, t2k, t3k, t4k = t
    p_t1 = _unit(1.0 - limit_laws.gumbel_cdf(t1))
    p_z = _unit(1.0 - limit_laws.std_normal_cdf(z_n))
    if k < 2:
        return p_t1, 1.0, 1.0, 1.0, p_z
    if table is None:
        table = limit_laws.default_f4k_table(k)
    elif table.k != k:
        raise ValueError(f"table built for k={table.k}, statistics use k={k}")
    p_t2k = _unit(1.0 - limit_laws.f2k_cdf(t2k, k))
    p_t3k = _unit(1.0 - limit_laws.f3k_cdf(t3k, k))
    p_t4k = _unit(1.0 - limit_laws.f4k_cdf(t4k, table))
    return p_t1, p_t2k, p_t3k, p_t4k, p_z


def rejection_threshold(beta: float) -> float:
    if not 0.0 <= beta < 1.0:
        raise ValueError(f"beta must lie in (0, 1), got {beta}")
    return 1.0 - math.sqrt(1.0 - beta)


def combined_tests(p_values: Sequence[float], beta: float, **stats) -> TestOutcome:
    """Combine ``(p_t1, p_t2k, p_t3k, p_t4k, p_z)`` into the four min-p tests.

    ``beta = 0`` is accepted as the degenerate level whose rejection region is
    empty.  Extra keyword arguments (``t1``, ``z_n``, ``k`` ...) are stored on
    the outcome.
    """
    p_t1, p_t2k, p_t3k, p_t4k, p_z = (float(v) for v in p_values)
    for v in (p_t1, p_t2k, p_t3k, p_t4k, p_z):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"p-values must lie in [0, 1], got {v}")
    thr = rejection_threshold(beta)
    combined = [min(p_z, v) for v in (p_t1, p_t2k, p_t3k, p_t4k)]
    return TestOutcome(
        p_t1=p_t1,
        p_t2k=p_t2k,
        p_t3k=p_t3k,
        p_t4k=p_t4k,
        p_z=p_z,
        beta=beta,
        threshold=thr,
        combined=combined,
        decisions=[c < thr for c in combined],
        **stats,
    )


def evaluate_tests(
    g_top: Sequence[float],
    z_n: float,
    k: int,
    beta: float,
    table: Optional[limit_laws.QuantileTable] = None,
) -> TestOutcome:
    """Statistics, p-values and decisions from the top-k values and ``Z_n``."""
    t = t_statistics(g_top, k)
    pv = p_transforms(t, z_n, k, table)
    return combined_tests(pv, beta, t1=t[0], t2k=t[1], t3k=t[2], t4k=t[3], z_n=z_n, k=k)
