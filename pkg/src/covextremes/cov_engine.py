"""
Streaming summaries of the sample covariance matrix ``S = X X^T / n``.

``summarize`` walks the upper triangle of ``S`` in row-block pairs and never
holds more than one ``block x block`` tile.  Each entry ``n S_ij`` is the
left-to-right sum over observations of ``x_it * x_jt``; this rounding order is
fixed per entry, so the result does not depend on the block size, on the tile
an entry falls in, or on the number of worker threads.  (BLAS ``gemm`` gives no
such guarantee, which is why it is not used here.)

The traces are correctly rounded sums of the per-entry values: each tile
reduces its terms to exact non-overlapping partials and ``math.fsum`` rounds
the union once, so they are also invariant under any reordering of variables.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numba
import numpy as np

__all__ = [
    "Interval",
    "IntervalUnion",
    "CovSummary",
    "as_data_matrix",
    "summarize",
    "full_offdiag",
    "DEFAULT_BLOCK",
]

DEFAULT_BLOCK = 128
FULL_OFFDIAG_LIMIT = 10**7


@dataclass(frozen=True)
class Interval:
    lower: float
    upper: float
    lower_open: bool = True
    upper_open: bool = True

    def __post_init__(self):
        if math.isnan(self.lower) or math.isnan(self.upper):
            raise ValueError("interval endpoints must not be NaN")
        if not self.lower < self.upper:
            raise ValueError(f"empty interval ({self.lower}, {self.upper})")
        # infinite endpoints are never attained
        if math.isinf(self.lower):
            object.__setattr__(self, "lower_open", True)
        if math.isinf(self.upper):
            object.__setattr__(self, "upper_open", True)

    def mask(self, values: np.ndarray) -> np.ndarray:
        lo = values > self.lower if self.lower_open else values >= self.lower
        hi = values < self.upper if self.upper_open else values <= self.upper
        return lo & hi

    def contains(self, x: float) -> bool:
        return bool(self.mask(np.asarray([x]))[0])

    def __str__(self):
        left = "(" if self.lower_open else "["
        right = ")" if self.upper_open else "]"
        return f"{left}{self.lower:g},{self.upper:g}{right}"


def _touches(a: Interval, b: Interval) -> bool:
    # a sorted before b; True when they share a point
    if a.upper > b.lower:
        return True
    return a.upper == b.lower and not (a.upper_open and b.lower_open)


@dataclass(frozen=True)
class IntervalUnion:
    """Finite union of disjoint intervals, sorted by lower endpoint."""

    intervals: tuple[Interval, ...] = ()

    def __post_init__(self):
        ivs = tuple(self.intervals)
        object.__setattr__(self, "intervals", ivs)
        for a, b in zip(ivs, ivs[1:]):
            if a.lower > b.lower or _touches(a, b):
                raise ValueError("intervals must be sorted and pairwise disjoint")

    @classmethod
    def of(cls, *pairs: tuple[float, float]) -> "IntervalUnion":
        """Union of open intervals given as ``(lower, upper)`` pairs."""
        ivs = sorted((Interval(float(a), float(b)) for a, b in pairs), key=lambda iv: iv.lower)
        return cls(tuple(ivs))

    @classmethod
    def real_line(cls) -> "IntervalUnion":
        return cls.of((-math.inf, math.inf))

    @classmethod
    def parse(cls, text: str) -> "IntervalUnion":
        """Parse ``"a,b;c,d"`` into open intervals; ``inf``/``-inf`` allowed."""
        text = text.strip()
        if not text:
            return cls()
        pairs = []
        for chunk in text.split(";"):
            parts = chunk.strip().strip("()[]").split(",")
            if len(parts) != 2:
                raise ValueError(f"bad interval {chunk!r}, expected 'a,b'")
            pairs.append((float(parts[0]), float(parts[1])))
        return cls.of(*pairs)

    def count(self, values: np.ndarray) -> int:
        values = np.asarray(values)
        if not self.intervals:
            return 0
        hit = np.zeros(values.shape, dtype=bool)
        for iv in self.intervals:
            hit |= iv.mask(values)
        return int(hit.sum())

    def contains(self, x: float) -> bool:
        return any(iv.contains(x) for iv in self.intervals)

    def __str__(self):
        return " U ".join(str(iv) for iv in self.intervals) or "{}"


@dataclass
class CovSummary:
    p: int
    n: int
    trace_s: float
    trace_s2: float
    top_g: list[float]
    interval_counts: list[int]
    total_offdiag: int
    top_pairs: list[tuple[int, int]] = field(default_factory=list)


def as_data_matrix(values) -> np.ndarray:
    """Validate and return a C-contiguous float64 ``p x n`` array."""
    x = np.ascontiguousarray(values, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"data must be a 2-d (p x n) array, got shape {x.shape}")
    if x.shape[0] < 1 or x.shape[1] < 1:
        raise ValueError(f"need p >= 1 and n >= 1, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("data contains non-finite values")
    return x


@numba.njit(nogil=True, cache=True)
def _gram_tile(xt, i0, i1, j0, j1, diagonal, out):
    """out[a, b] = sum_t xt[t, i0+a] * xt[t, j0+b], summed in t order.

    On diagonal tiles only entries with column >= row are guaranteed filled.
    """
    n = xt.shape[0]
    out[:, :] = 0.0
    i = i0
    while i < i1:
        rows = min(4, i1 - i)
        a = i - i0
        start = (i - j0) if diagonal else 0
        m = j1 - j0 - start
        if rows == 4:
            o0 = out[a, start:]
            o1 = out[a + 1, start:]
            o2 = out[a + 2, start:]
            o3 = out[a + 3, start:]
            for t in range(n):
                xr = xt[t]
                c0 = xr[i]
                c1 = xr[i + 1]
                c2 = xr[i + 2]
                c3 = xr[i + 3]
                v = xr[j0 + start : j1]
                for b in range(m):
                    w = v[b]
                    o0[b] += c0 * w
                    o1[b] += c1 * w
                    o2[b] += c2 * w
                    o3[b] += c3 * w
        else:
            for r in range(rows):
                o = out[a + r, start:]
                for t in range(n):
                    xr = xt[t]
                    c = xr[i + r]
                    v = xr[j0 + start : j1]
                    for b in range(m):
                        o[b] += c * v[b]
        i += rows


@numba.njit(cache=True)
def _exact_partials(values):
    """Non-overlapping partials whose exact sum is ``sum(values)`` (Shewchuk)."""
    partials = np.empty(80)
    m = 0
    for v in values:
        x = v
        i = 0
        for j in range(m):
            y = partials[j]
            if abs(x) < abs(y):
                x, y = y, x
            hi = x + y
            lo = y - (hi - x)
            if lo != 0.0:
                partials[i] = lo
                i += 1
            x = hi
        partials[i] = x
        m = i + 1
    return partials[:m].copy()


def _normalize(s: np.ndarray, n: int, d_p: float) -> np.ndarray:
    return d_p * (math.sqrt(n) * s - d_p)


def _select_top(values, rows, cols, k):
    """k largest values; ties broken by (row, col) lexicographic order."""
    if k <= 0 or values.size == 0:
        return values[:0], rows[:0], cols[:0]
    if values.size > k:
        cutoff = np.partition(values, values.size - k)[values.size - k]
        keep = values >= cutoff
        values, rows, cols = values[keep], rows[keep], cols[keep]
    order = np.lexsort((cols, rows, -values))[:k]
    return values[order], rows[order], cols[order]


@dataclass
class _TileResult:
    diag_parts: np.ndarray = field(default_factory=lambda: np.empty(0))
    sq_parts: np.ndarray = field(default_factory=lambda: np.empty(0))
    top_vals: np.ndarray = field(default_factory=lambda: np.empty(0))
    top_rows: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    top_cols: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    counts: Optional[list[int]] = None


def _process_tile(xt, n, i0, i1, j0, j1, k, unions, d_p) -> _TileResult:
    tile = np.empty((i1 - i0, j1 - j0))
    diagonal = i0 == j0
    _gram_tile(xt, i0, i1, j0, j1, diagonal, tile)
    tile /= n
    res = _TileResult()
    if diagonal:
        rows, cols = np.triu_indices(i1 - i0, k=1)
        diag = np.ascontiguousarray(np.diagonal(tile))
        res.diag_parts = _exact_partials(diag)
        off = tile[rows, cols]
        # 2 s^2 is exact, so doubling keeps the partials exact
        res.sq_parts = _exact_partials(np.concatenate([diag * diag, 2.0 * (off * off)]))
    else:
        off = tile.ravel()
        res.sq_parts = _exact_partials(2.0 * (off * off))
        if k > 0:
            rows, cols = np.divmod(np.arange(off.size), j1 - j0)
    if k > 0 or unions:
        g = _normalize(off, n, d_p)
        if k > 0:
            v, r, c = _select_top(g, rows + i0, cols + j0, k)
            res.top_vals, res.top_rows, res.top_cols = v, r, c
        res.counts = [u.count(g) for u in unions]
    return res


def summarize(
    data,
    k: int = 0,
    unions: Sequence[IntervalUnion] = (),
    d_p: Optional[float] = None,
    block: int = DEFAULT_BLOCK,
    workers: int = 1,
) -> CovSummary:
    """Traces of ``S`` and ``S^2`` plus point-process summaries of the entries.

    Parameters
    ----------
    data : array_like, shape (p, n)
        Variables in rows, observations in columns.
    k : int
        Number of largest normalized off-diagonal values ``d_p (sqrt(n) S_ij - d_p)``
        to return, ``i < j``.
    unions : sequence of IntervalUnion
        Sets on which to count normalized off-diagonal values.
    d_p : float
        Centering/scaling constant; required when ``k > 0`` or ``unions`` is
        nonempty.
    block : int
        Rows per tile.  Results are bit-identical for every block size.
    workers : int
        Threads used for tiles; merged in tile order, so output does not
        depend on it.
    """
    x = as_data_matrix(data)
    p, n = x.shape
    total = p * (p - 1) // 2
    unions = list(unions)
    if k < 0:
        raise ValueError("k must be nonnegative")
    if k > total:
        raise ValueError(f"k={k} exceeds the number of off-diagonal pairs p(p-1)/2={total}")
    if (k > 0 or unions) and (d_p is None or not math.isfinite(d_p)):
        raise ValueError("a finite d_p is required for top-k values and interval counts")
    if block < 1:
        raise ValueError("block must be >= 1")

    xt = np.ascontiguousarray(x.T)
    starts = list(range(0, p, block))
    tiles = [(i0, min(p, i0 + block), j0, min(p, j0 + block)) for a, i0 in enumerate(starts) for j0 in starts[a:]]

    def run(tile):
        return _process_tile(xt, n, *tile, k, unions, d_p)

    if workers > 1 and len(tiles) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, tiles))
    else:
        results = [run(t) for t in tiles]

    trace_s = math.fsum(v for r in results for v in r.diag_parts)
    trace_s2 = math.fsum(v for r in results for v in r.sq_parts)
    counts = [0] * len(unions)
    top_vals: list[float] = []
    top_pairs: list[tuple[int, int]] = []
    if k > 0 or unions:
        for r in results:
            if r.counts is not None:
                counts = [a + b for a, b in zip(counts, r.counts)]
        if k > 0:
            v = np.concatenate([r.top_vals for r in results])
            rr = np.concatenate([r.top_rows for r in results])
            cc = np.concatenate([r.top_cols for r in results])
            v, rr, cc = _select_top(v, rr, cc, k)
            top_vals = [float(a) for a in v]
            top_pairs = [(int(a), int(b)) for a, b in zip(rr, cc)]
    return CovSummary(
        p=p,
        n=n,
        trace_s=trace_s,
        trace_s2=trace_s2,
        top_g=top_vals,
        interval_counts=counts,
        total_offdiag=total,
        top_pairs=top_pairs,
    )


def full_offdiag(data) -> np.ndarray:
    """All ``S_ij``, ``i < j``, in row-major pair order, by naive accumulation.

    Reference path for tests: builds the whole ``p x p`` matrix by adding one
    outer product per observation, which reproduces the per-entry rounding of
    ``summarize`` without sharing any of its code.
    """
    x = as_data_matrix(data)
    p, n = x.shape
    if p * (p - 1) // 2 > FULL_OFFDIAG_LIMIT:
        raise ValueError(f"p(p-1)/2 exceeds {FULL_OFFDIAG_LIMIT}; refusing to materialize")
    acc = np.zeros((p, p))
    for t in range(n):
        acc += np.multiply.outer(x[:, t], x[:, t])
    acc /= n
    rows, cols = np.triu_indices(p, k=1)
    return acc[rows, cols]
