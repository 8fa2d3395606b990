"""System parameters of the droplet scheme and the parameter solver."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..gf_core import CostModel, droplet_cost

CODES = ("r10", "lt", "ideal")


class InfeasibleParams(ValueError):
    pass


@dataclass(frozen=True)
class SystemParams:
    """One configuration of the scheme.

    ``m`` is the unpadded row count of ``A``; the matrix is zero-padded up to
    ``m_padded``, the next multiple of ``l``. ``r`` counts coded rows, split
    into ``r / l`` coded submatrices of which each server stores
    ``per_server``.
    """

    K: int
    m: int
    n: int
    N: int
    l: int
    r: int
    u: int = 8
    beta: float = 1.0
    q: int | str = "auto"
    code: str = "r10"
    eps_min: float | None = None
    lt_c: float = 0.03
    lt_delta: float = 0.5
    cost: CostModel = field(default=None, compare=False)

    def __post_init__(self):
        if self.cost is None:
            object.__setattr__(self, "cost", CostModel.from_u(self.u))
        if min(self.K, self.m, self.n, self.N, self.l) < 1:
            raise InfeasibleParams("K, m, n, N and l must be positive")
        if self.code not in CODES:
            raise InfeasibleParams(f"unknown code {self.code!r}")
        if not self.beta > 0:
            raise InfeasibleParams("beta must be positive")
        if self.r % (self.l * self.K):
            raise InfeasibleParams("each server must store a whole number of submatrices")
        if not 1 <= self.per_server <= self.k:
            raise InfeasibleParams("storage fraction must lie in [1/K, 1]")
        if self.q != "auto":
            if not 1 <= self.q <= self.K:
                raise InfeasibleParams("q must lie in 1..K")
            if self.N % self.q:
                raise InfeasibleParams("q must divide N")

    @property
    def m_padded(self) -> int:
        return math.ceil(self.m / self.l) * self.l

    @property
    def padding(self) -> int:
        return self.m_padded - self.m

    @property
    def k(self) -> int:
        """Source submatrices (``m_padded / l``)."""
        return self.m_padded // self.l

    @property
    def n_coded(self) -> int:
        return self.r // self.l

    @property
    def per_server(self) -> int:
        return self.r // (self.l * self.K)

    @property
    def eta(self) -> float:
        return self.per_server * self.l / self.m_padded

    @property
    def rate(self) -> float:
        return self.m_padded / self.r

    @property
    def sigma_d(self) -> float:
        return droplet_cost(self.l, self.n, self.cost)

    @property
    def sigma_K(self) -> float:
        return sigma_K(self.m, self.n, self.N, self.K, self.cost)

    @property
    def workload(self) -> float:
        return self.m * self.n * self.N / self.K

    def with_(self, **changes) -> "SystemParams":
        return replace(self, **changes)


def sigma_K(m: int, n: int, N: int, K: int, cost: CostModel) -> float:
    """Total time of the N uncoded products divided by K."""
    return m * cost.row_cost(n) * N / K


def make_params(K: int, m: int, n: int, N: int, l: int, rate: float = 1 / 3, *,
                u: int = 8, beta: float | None = None, q: int | str = "auto",
                code: str = "r10", eps_min: float | None = None, **kw) -> SystemParams:
    """Build parameters from a code rate; ``beta`` defaults to ``sigma_K``."""
    cost = CostModel.from_u(u)
    k = math.ceil(m / l)
    per_server = min(k, max(1, round(k / (rate * K))))
    if beta is None:
        beta = sigma_K(m, n, N, K, cost)
    return SystemParams(K=K, m=m, n=n, N=N, l=l, r=per_server * l * K, u=u, beta=beta,
                        q=q, code=code, eps_min=eps_min, cost=cost, **kw)


def solve_params(K: int, workload: float = 1e7, rate: float = 1 / 3, *, tol: float = 0.1,
                 k_range: tuple[int, int] = (900, 1100), k_target: int = 1024,
                 u: int = 8, code: str = "r10", **kw) -> SystemParams:
    """Sweep-style parameters: ``m = 1000 n``, ``N = 10 K``, workload near ``workload``.

    ``n`` is the integer whose workload ``m n N / K`` is closest to the
    target (within ``tol``); ``l`` gives ``k_range[0] < m/l < k_range[1]``,
    preferring divisors of ``m`` and then ``m / l`` closest to ``k_target``.
    """
    if workload <= 0:
        raise InfeasibleParams("workload target must be positive")
    N = 10 * K
    best_n = None
    n = 1
    while 1000 * n * n * N / K <= workload * (1 + tol):
        w = 1000 * n * n * N / K
        if abs(w / workload - 1) <= tol and (
                best_n is None or abs(w - workload) < abs(1000 * best_n**2 * N / K - workload)):
            best_n = n
        n += 1
    if best_n is None:
        raise InfeasibleParams("no n meets the workload target")
    n = best_n
    m = 1000 * n
    ls = [l for l in range(1, m + 1) if k_range[0] < m / l < k_range[1]]
    if not ls:
        raise InfeasibleParams("no droplet size meets the source-symbol range")
    l = min(ls, key=lambda l: (m % l != 0, abs(m / l - k_target), l))
    return make_params(K, m, n, N, l, rate, u=u, code=code, **kw)


def divisors_up_to(N: int, K: int) -> list[int]:
    return [q for q in range(1, min(N, K) + 1) if N % q == 0]


@dataclass(frozen=True)
class Placement:
    """Stored submatrices per server and output vectors per reduce server."""

    stored: tuple[tuple[int, ...], ...]
    outputs: tuple[tuple[int, ...], ...]


def place(params: SystemParams, rng: np.random.Generator, q: int | None = None) -> Placement:
    """Random balanced assignment of coded submatrices and output vectors."""
    q = q if q is not None else (1 if params.q == "auto" else params.q)
    if params.N % q:
        raise InfeasibleParams("q must divide N")
    perm = rng.permutation(params.n_coded)
    s = params.per_server
    stored = tuple(tuple(sorted(int(i) for i in perm[k * s:(k + 1) * s])) for k in range(params.K))
    out_perm = rng.permutation(params.N)
    w = params.N // q
    outputs = tuple(tuple(sorted(int(j) for j in out_perm[b * w:(b + 1) * w])) for b in range(q))
    return Placement(stored, outputs)
