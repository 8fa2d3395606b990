"""Degree distributions and plain LT codes."""

from __future__ import annotations

import bisect
import math
import random
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class DegreeDistribution:
    """Output-degree law over ``{1..k}``; ``pmf[d - 1]`` is Pr(degree = d)."""

    k: int
    pmf: tuple[float, ...]

    def __post_init__(self):
        if len(self.pmf) != self.k:
            raise ValueError("pmf length must equal k")
        if min(self.pmf) < 0:
            raise ValueError("negative probability")
        if abs(math.fsum(self.pmf) - 1.0) > 1e-12:
            raise ValueError(f"pmf sums to {math.fsum(self.pmf)!r}")

    @classmethod
    def from_weights(cls, weights) -> "DegreeDistribution":
        w = [float(x) for x in weights]
        total = math.fsum(w)
        return cls(len(w), tuple(x / total for x in w))

    def prob(self, d: int) -> float:
        return self.pmf[d - 1] if 1 <= d <= self.k else 0.0

    @property
    def cdf(self) -> list[float]:
        out = list(np.cumsum(self.pmf))
        out[-1] = 1.0
        return out

    def mean(self) -> float:
        return math.fsum(d * p for d, p in enumerate(self.pmf, start=1))

    def degree(self, uniform: float) -> int:
        """Inverse-CDF lookup for a uniform draw in [0, 1)."""
        return bisect.bisect_right(self.cdf, uniform) + 1


@dataclass(frozen=True)
class RobustSolitonParams:
    k: int
    c: float
    delta: float

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("robust Soliton needs k >= 2")
        if self.c <= 0:
            raise ValueError("c must be positive")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")


def robust_soliton(params: RobustSolitonParams) -> DegreeDistribution:
    """Ideal Soliton plus the spike/tail correction, normalized."""
    k, c, delta = params.k, params.c, params.delta
    R = c * math.log(k / delta) * math.sqrt(k)
    spike = min(k, max(1, int(k / R)))
    weights = np.zeros(k)
    weights[0] = 1.0 / k
    d = np.arange(2, k + 1)
    weights[1:] = 1.0 / (d * (d - 1.0))
    tau = np.zeros(k)
    d = np.arange(1, spike)
    tau[: spike - 1] = R / (d * k)
    tau[spike - 1] = max(0.0, R * math.log(R / delta) / k)
    return DegreeDistribution.from_weights(weights + tau)


class LTCode:
    """LT code over ``k`` source symbols.

    The neighbor set of encoded symbol ``esi`` is a pure function of
    ``(seed, esi)``, so encoder and decoder agree without side channels.
    """

    def __init__(self, k: int, distribution: DegreeDistribution, seed: int = 0):
        if distribution.k != k:
            raise ValueError("distribution defined over a different k")
        self.k = k
        self.L = k
        self.distribution = distribution
        self.seed = seed
        self._cdf = distribution.cdf

    name = "lt"

    def precode_rows(self) -> list[tuple[int, ...]]:
        return []

    def precode_dense(self) -> list[bool]:
        return []

    def neighbors(self, esi: int) -> tuple[int, ...]:
        rng = random.Random((self.seed << 32) ^ esi)
        d = bisect.bisect_right(self._cdf, rng.random()) + 1
        return tuple(sorted(rng.sample(range(self.k), min(d, self.k))))

    def degree(self, esi: int) -> int:
        return len(self.neighbors(esi))
