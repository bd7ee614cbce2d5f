"""
Null models for the entries of the data matrix.

Every model is standardized to mean zero and unit variance.  The heavy-tailed
variants additionally expose their tail index and the quantile sequence
``a_k`` of ``|X|``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np
from scipy import optimize, stats

__all__ = [
    "Variant",
    "NullModel",
    "MomentProfile",
    "child_stream",
    "sample_matrix",
    "exact_m4",
    "estimate_m4",
    "quantile_a",
    "standardize_rows",
]


class Variant(str, Enum):
    NORMAL = "normal"
    BERNOULLI = "bernoulli"
    STUDENT_T = "t"
    PARETO = "pareto"


@dataclass(frozen=True)
class NullModel:
    """Standardized law of the iid entries ``X_it``.

    ``param`` is the degrees of freedom for Student-t and the tail index for
    the symmetric Pareto model; it is ignored otherwise.
    """

    variant: Variant
    param: Optional[float] = None
    scale: float = field(init=False)

    def __post_init__(self):
        variant = Variant(self.variant)
        object.__setattr__(self, "variant", variant)
        if variant in (Variant.STUDENT_T, Variant.PARETO):
            if self.param is None or not math.isfinite(self.param):
                raise ValueError(f"{variant.value} model needs a finite parameter")
            if self.param <= 2:
                what = "dof" if variant is Variant.STUDENT_T else "alpha"
                raise ValueError(f"{variant.value} model requires {what} > 2, got {self.param}")
            scale = math.sqrt((self.param - 2.0) / self.param)
        else:
            object.__setattr__(self, "param", None)
            scale = 1.0
        object.__setattr__(self, "scale", scale)

    @classmethod
    def normal(cls) -> "NullModel":
        return cls(Variant.NORMAL)

    @classmethod
    def bernoulli(cls) -> "NullModel":
        return cls(Variant.BERNOULLI)

    @classmethod
    def student_t(cls, dof: float) -> "NullModel":
        return cls(Variant.STUDENT_T, float(dof))

    @classmethod
    def pareto(cls, alpha: float) -> "NullModel":
        return cls(Variant.PARETO, float(alpha))

    @classmethod
    def parse(cls, text: str) -> "NullModel":
        """Parse ``normal``, ``bernoulli``, ``t:DOF`` or ``pareto:ALPHA``."""
        name, _, arg = text.strip().lower().partition(":")
        if name in ("normal", "bernoulli"):
            if arg:
                raise ValueError(f"model {name!r} takes no parameter")
            return cls(Variant(name))
        if name in ("t", "pareto"):
            if not arg:
                raise ValueError(f"model {name!r} needs a parameter, e.g. {name}:3")
            return cls(Variant(name), float(arg))
        raise ValueError(f"unknown model {text!r}")

    def spec(self) -> str:
        if self.param is None:
            return self.variant.value
        return f"{self.variant.value}:{self.param:g}"

    @property
    def alpha(self) -> Optional[float]:
        """Tail index, or None for models with all moments finite."""
        if self.variant in (Variant.STUDENT_T, Variant.PARETO):
            return self.param
        return None

    @property
    def moment_order(self) -> float:
        """Supremum of the orders ``s`` with ``E|X|^s < inf``."""
        return self.alpha if self.alpha is not None else math.inf

    def profile(self) -> "MomentProfile":
        a_scale = self.scale if self.variant is Variant.PARETO else None
        return MomentProfile(m4=exact_m4(self), alpha=self.alpha, a_scale=a_scale)


@dataclass(frozen=True)
class MomentProfile:
    m4: float
    alpha: Optional[float] = None
    a_scale: Optional[float] = None

    def __post_init__(self):
        if not self.m4 >= 1.0:
            raise ValueError(f"fourth moment must be >= 1, got {self.m4}")


def child_stream(master_seed: int, *key: int) -> np.random.Generator:
    """Independent generator for the replication/purpose identified by ``key``.

    The stream is ``PCG64(SeedSequence(master_seed, spawn_key=key))``.  Distinct
    keys hash to distinct SeedSequence states, so replication ``i`` always
    sees the same numbers no matter which worker runs it or in what order.
    """
    seq = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(seq))


def _draw(model: NullModel, size, stream: np.random.Generator) -> np.ndarray:
    v = model.variant
    if v is Variant.NORMAL:
        return stream.standard_normal(size)
    if v is Variant.BERNOULLI:
        return stream.integers(0, 2, size=size).astype(np.float64) * 2.0 - 1.0
    if v is Variant.STUDENT_T:
        return stream.standard_t(model.param, size=size) * model.scale
    # symmetric Pareto: sign * Y with P(Y > y) = y^-alpha on [1, inf)
    u = 1.0 - stream.random(size)
    sign = stream.integers(0, 2, size=size).astype(np.float64) * 2.0 - 1.0
    return sign * (u ** (-1.0 / model.param)) * model.scale


def sample_matrix(model: NullModel, p: int, n: int, stream: np.random.Generator) -> np.ndarray:
    """Draw a ``p x n`` matrix (variables x observations) of iid entries."""
    if p < 1 or n < 1:
        raise ValueError(f"need p >= 1 and n >= 1, got p={p}, n={n}")
    return np.ascontiguousarray(_draw(model, (p, n), stream), dtype=np.float64)


def sample_entries(model: NullModel, count: int, stream: np.random.Generator) -> np.ndarray:
    return _draw(model, count, stream)


def exact_m4(model: NullModel) -> float:
    """Population fourth moment ``E[X^4]`` of the standardized entry."""
    v = model.variant
    if v is Variant.NORMAL:
        return 3.0
    if v is Variant.BERNOULLI:
        return 1.0
    a = model.param
    if a <= 4:
        return math.inf
    if v is Variant.STUDENT_T:
        return 3.0 * (a - 2.0) / (a - 4.0)
    # E[Y^4] = a/(a-4), E[Y^2] = a/(a-2), scaled to unit variance
    return (a / (a - 4.0)) * ((a - 2.0) / a) ** 2


def standardize_rows(values: np.ndarray) -> np.ndarray:
    """Center each variable (row) and scale it to unit variance (ddof=0)."""
    x = np.asarray(values, dtype=np.float64)
    centered = x - x.mean(axis=1, keepdims=True)
    sd = np.sqrt((centered ** 2).mean(axis=1, keepdims=True))
    if np.any(sd == 0.0):
        bad = int(np.flatnonzero(sd.ravel() == 0.0)[0])
        raise ValueError(f"degenerate variable (zero variance) at index {bad}")
    return centered / sd


def estimate_m4(data: np.ndarray) -> float:
    """Plug-in fourth moment from row-standardized data, clamped below at 1."""
    x = np.asarray(data, dtype=np.float64)
    if x.size == 0:
        raise ValueError("empty data")
    z = standardize_rows(x)
    return max(1.0, float(np.mean(z ** 4)))


def _abs_tail(model: NullModel, x: float) -> float:
    """P(|X| > x) for the standardized Student-t entry."""
    return 2.0 * stats.t.sf(x / model.scale, model.param)


def quantile_a(model: NullModel, k: int) -> float:
    """``a_k = inf{x : P(|X| > x) <= 1/k}`` for the standardized entry.

    Exact for the symmetric Pareto model; Student-t values come from a
    bracketing root search on the tail probability.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    alpha = model.alpha
    if alpha is None or alpha > 4:
        raise ValueError(f"a_k undefined for this model ({model.spec()})")
    if model.variant is Variant.PARETO:
        return model.scale * float(k) ** (1.0 / alpha)
    if k == 1:
        return 0.0
    target = 1.0 / k
    hi = model.scale * max(1.0, float(k) ** (1.0 / alpha))
    while _abs_tail(model, hi) > target:
        hi *= 2.0
    return optimize.brentq(lambda x: _abs_tail(model, x) - target, 0.0, hi, xtol=1e-300, rtol=1e-12)

