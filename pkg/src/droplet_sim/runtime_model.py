"""Exponential server-availability model and its order statistics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special, stats


@dataclass(frozen=True)
class StragglerModel:
    beta: float
    K: int

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.K < 1:
            raise ValueError("need at least one server")


@dataclass(frozen=True)
class StragglerSample:
    h_sorted: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.h_sorted, dtype=float)
        if h.size and (h.min() < 0 or np.any(np.diff(h) < 0)):
            raise ValueError("availability times must be nonnegative and sorted")
        object.__setattr__(self, "h_sorted", h)

    @property
    def K(self) -> int:
        return len(self.h_sorted)

    def h(self, i: int) -> float:
        """The i-th smallest availability time (1-based)."""
        return float(self.h_sorted[i - 1])


def sample_availability(model: StragglerModel, rng: np.random.Generator) -> StragglerSample:
    # scale a standard draw so that paired runs over beta stay coupled
    return StragglerSample(np.sort(rng.standard_exponential(model.K)) * model.beta)


def _check_index(model: StragglerModel, i: int) -> None:
    if not 1 <= i <= model.K:
        raise ValueError(f"order statistic index {i} outside 1..{model.K}")


def order_stat_mean(model: StragglerModel, i: int) -> float:
    """Expected time until ``i`` of the ``K`` servers are available."""
    _check_index(model, i)
    j = np.arange(model.K - i + 1, model.K + 1, dtype=float)
    return float(model.beta * np.sum(1.0 / j))


def order_stat_var(model: StragglerModel, i: int) -> float:
    _check_index(model, i)
    j = np.arange(model.K - i + 1, model.K + 1, dtype=float)
    return float(model.beta**2 * np.sum(1.0 / j**2))


def gamma_fit(model: StragglerModel, i: int) -> tuple[float, float]:
    """Inverse scale ``a`` and shape ``b`` matching the order statistic's moments."""
    mean = order_stat_mean(model, i)
    var = order_stat_var(model, i)
    return mean / var, mean**2 / var


def order_stat_cdf(model: StragglerModel, i: int, t: float) -> float:
    if t <= 0:
        return 0.0
    a, b = gamma_fit(model, i)
    return float(special.gammainc(b, a * t))


def avail_count_pmf(model: StragglerModel, t: float, j: int) -> float:
    """Pr(exactly ``j`` servers are available at time ``t``)."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if not 0 <= j <= model.K:
        raise ValueError(f"j must lie in 0..{model.K}")
    p = -np.expm1(-t / model.beta)
    return float(stats.binom.pmf(j, model.K, p))


def avail_count_pmf_all(model: StragglerModel, t: float) -> np.ndarray:
    p = -np.expm1(-max(t, 0.0) / model.beta)
    return stats.binom.pmf(np.arange(model.K + 1), model.K, p)
