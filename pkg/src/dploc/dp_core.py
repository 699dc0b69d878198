"""Differential-privacy primitives: Laplace noise, quantiles, count
sanitization, and privacy-budget resolution.

Every noised quantity in this package is a point count, so the sensitivity
is fixed at 1 and Laplace scales are always 1/epsilon. Sampling goes through
the inverse CDF so the sampler and the quantile function are self-consistent.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import InvalidParameter

_REL_TOL = 1e-12


class Method(str, Enum):
    """Generation methods, named as they appear on the command line."""

    UGRID_UNI = "UGrid-Uni"
    UGRID_WUD = "UGrid-WUD"
    UGRID_KDE = "UGrid-KDE"
    AGRID_UNI = "AGrid-Uni"
    AGRID_WUD = "AGrid-WUD"
    AGRID_KDE = "AGrid-KDE"
    CLUST_UNI = "Clust-Uni"
    CLUST_WUD = "Clust-WUD"
    CLUST_KDE = "Clust-KDE"
    ROAD = "Road"

    @classmethod
    def parse(cls, name: str) -> "Method":
        for m in cls:
            if m.value.lower() == name.lower():
                return m
        raise InvalidParameter(f"unknown method {name!r}; expected one of "
                               + ", ".join(m.value for m in cls))

    @property
    def partition(self) -> str:
        """Partitioning family: 'ugrid', 'agrid', 'cluster', or 'road'."""
        if self is Method.ROAD:
            return "road"
        return {"UGrid": "ugrid", "AGrid": "agrid", "Clust": "cluster"}[self.value.split("-")[0]]

    @property
    def generator(self) -> str:
        """In-region generator: 'uniform', 'wud', 'kde', or 'road'."""
        if self is Method.ROAD:
            return "road"
        return {"Uni": "uniform", "WUD": "wud", "KDE": "kde"}[self.value.split("-")[1]]


@dataclass(frozen=True)
class Budget:
    """Per-stage privacy budgets with eps1 + eps2 + eps3 = epsilon_total."""

    epsilon_total: float
    eps1: float
    eps2: float
    eps3: float

    def __post_init__(self):
        if not (self.epsilon_total > 0):
            raise InvalidParameter("epsilon_total must be positive")
        for name in ("eps1", "eps2", "eps3"):
            if getattr(self, name) < 0:
                raise InvalidParameter(f"{name} must be nonnegative")
        total = self.eps1 + self.eps2 + self.eps3
        if abs(total - self.epsilon_total) > _REL_TOL * self.epsilon_total:
            raise InvalidParameter(
                f"budget components sum to {total}, expected {self.epsilon_total}")


@dataclass(frozen=True)
class LaplaceScale:
    """Scale b of a zero-mean Laplace distribution (= sensitivity/epsilon)."""

    b: float

    def __post_init__(self):
        if not (self.b > 0) or not math.isfinite(self.b):
            raise InvalidParameter("Laplace scale must be positive and finite")


# Test hook: when active, all Laplace draws are exactly zero. Used only by
# the oracle-equivalence tests; never enter this in a production path.
_ZERO_NOISE = False


@contextmanager
def zero_noise():
    """Force Laplace draws to 0 inside the context (test hook)."""
    global _ZERO_NOISE
    prev = _ZERO_NOISE
    _ZERO_NOISE = True
    try:
        yield
    finally:
        _ZERO_NOISE = prev


def laplace_quantile(mu: float, F: float, eps: float) -> float:
    """Inverse CDF of Laplace(mu, 1/eps) at probability F."""
    if not (0.0 < F < 1.0):
        raise InvalidParameter(f"F must lie in (0, 1), got {F}")
    if not (eps > 0):
        raise InvalidParameter(f"eps must be positive, got {eps}")
    if F <= 0.5:
        return mu + math.log(2.0 * F) / eps
    return mu - math.log(2.0 - 2.0 * F) / eps


def _scale_b(scale) -> float:
    b = scale.b if isinstance(scale, LaplaceScale) else float(scale)
    if not (b > 0) or not math.isfinite(b):
        raise InvalidParameter("Laplace scale must be positive and finite")
    return b


def laplace_sample(scale, rng: np.random.Generator) -> float:
    """One draw from the zero-mean Laplace distribution with the given scale."""
    b = _scale_b(scale)
    if _ZERO_NOISE:
        return 0.0
    u = rng.random()
    while u == 0.0:  # keep F inside (0, 1)
        u = rng.random()
    return laplace_quantile(0.0, u, 1.0 / b)


def laplace_samples(scale, size: int, rng: np.random.Generator) -> np.ndarray:
    """Vectorized zero-mean Laplace draws (same construction as laplace_sample)."""
    b = _scale_b(scale)
    if _ZERO_NOISE:
        return np.zeros(size)
    u = rng.random(size)
    while np.any(u == 0.0):
        z = u == 0.0
        u[z] = rng.random(int(z.sum()))
    return np.where(u <= 0.5, b * np.log(2.0 * u), -b * np.log(2.0 - 2.0 * u))


def sanitize_count(x: float) -> int:
    """Round half away from zero, then clamp at 0."""
    return int(max(0.0, math.floor(x + 0.5)))


def sanitize_counts(x: np.ndarray) -> np.ndarray:
    """Vectorized sanitize_count."""
    return np.maximum(0.0, np.floor(np.asarray(x, dtype=float) + 0.5)).astype(np.int64)


# Default splits (fraction of epsilon for stages 1 and 3; stage 2 takes the
# remainder so the three parts sum to epsilon exactly in floating point).
_SPLITS = {
    Method.UGRID_UNI: (1.0, 0.0),
    Method.UGRID_WUD: (1.0, 0.0),
    Method.UGRID_KDE: (0.6, 0.4),
    Method.AGRID_UNI: (0.5, 0.0),
    Method.AGRID_WUD: (0.5, 0.0),
    Method.AGRID_KDE: (0.4, 0.2),
    Method.CLUST_UNI: (2.0 / 3.0, 0.0),
    Method.CLUST_WUD: (2.0 / 3.0, 0.0),
    Method.CLUST_KDE: (0.25, 0.25),
    Method.ROAD: (1.0 / 3.0, 1.0 / 3.0),
}


def resolve_budget(method, epsilon_total: float) -> Budget:
    """Default privacy-budget split for a method, rescaled to epsilon_total."""
    if not (epsilon_total > 0):
        raise InvalidParameter("epsilon_total must be positive")
    m = Method.parse(method) if isinstance(method, str) else method
    if m not in _SPLITS:
        raise InvalidParameter(f"unknown method {method!r}")
    f1, f3 = _SPLITS[m]
    eps1 = f1 * epsilon_total
    eps3 = f3 * epsilon_total
    eps2 = max(0.0, epsilon_total - eps1 - eps3)
    return Budget(epsilon_total, eps1, eps2, eps3)
