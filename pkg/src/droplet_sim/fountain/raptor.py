"""R10-style Raptor code: LDPC + HDPC precode and the inner LT layer.

The parameter derivation, precode structure, degree table and tuple
generator follow the standardized R10 layout. The pseudo-random source is a
64-bit integer mixer instead of the standard's fixed lookup tables, and the
code is used in nonsystematic form (source symbols are the first ``k``
intermediate symbols; every transmitted symbol is an LT output).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .soliton import DegreeDistribution

MIN_K = 4
MAX_K = 8192

# (cumulative threshold out of 2^20, degree)
DEGREE_TABLE = (
    (10241, 1),
    (491582, 2),
    (712794, 3),
    (831695, 4),
    (948446, 10),
    (1032189, 11),
    (1048576, 40),
)

_Q = 65521
_A = 53591
_B = 10267
_MASK64 = (1 << 64) - 1


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    if n % 2 == 0:
        return n == 2
    i = 3
    while i * i <= n:
        if n % i == 0:
            return False
        i += 2
    return True


def next_prime(n: int) -> int:
    while not is_prime(n):
        n += 1
    return n


def derive_parameters(k: int) -> tuple[int, int, int]:
    """Return ``(X, S, H)`` for ``k`` source symbols."""
    x = 1
    while x * (x - 1) < 2 * k:
        x += 1
    s = next_prime(math.ceil(0.01 * k) + x)
    h = 1
    while math.comb(h, math.ceil(h / 2)) < k + s:
        h += 1
    return x, s, h


def mix64(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def rand(x: int, i: int, m: int, seed: int = 0) -> int:
    """Stand-in for the standard's Rand[X, i, m]; uniform on ``[0, m)``."""
    return mix64((seed << 40) ^ (x << 8) ^ i) % m


def deg(v: int) -> int:
    for threshold, d in DEGREE_TABLE:
        if v < threshold:
            return d
    raise ValueError("v must be below 2^20")


def r10_distribution(L: int) -> DegreeDistribution:
    """The tabulated LT degree law, with degrees above ``L`` folded onto ``L``."""
    weights = [0.0] * L
    prev = 0
    for threshold, d in DEGREE_TABLE:
        weights[min(d, L) - 1] += (threshold - prev) / 2**20
        prev = threshold
    return DegreeDistribution.from_weights(weights)


def gray_codes_with_weight(weight: int, count: int) -> list[int]:
    out = []
    i = 0
    while len(out) < count:
        g = i ^ (i >> 1)
        if bin(g).count("1") == weight:
            out.append(g)
        i += 1
    return out


@dataclass(frozen=True)
class RaptorCodeSpec:
    k: int
    s: int
    h: int
    L: int
    L_prime: int
    ldpc: tuple[tuple[int, ...], ...]
    hdpc: tuple[tuple[int, ...], ...]
    lt_distribution: DegreeDistribution
    seed: int = 0
    name: str = field(default="r10", init=False)

    def precode_rows(self) -> list[tuple[int, ...]]:
        return list(self.ldpc) + list(self.hdpc)

    def precode_dense(self) -> list[bool]:
        return [False] * len(self.ldpc) + [True] * len(self.hdpc)

    def precode_matrix(self) -> np.ndarray:
        rows = self.precode_rows()
        out = np.zeros((len(rows), self.L), dtype=np.uint8)
        for r, cols in enumerate(rows):
            out[r, list(cols)] = 1
        return out

    def triple(self, esi: int) -> tuple[int, int, int]:
        y = (_B + esi * _A) % _Q
        d = deg(rand(y, 0, 2**20, self.seed))
        a = 1 + rand(y, 1, self.L_prime - 1, self.seed)
        b = rand(y, 2, self.L_prime, self.seed)
        return d, a, b

    def neighbors(self, esi: int) -> tuple[int, ...]:
        """Intermediate-symbol indices combined into encoded symbol ``esi``."""
        d, a, b = self.triple(esi)
        L, Lp = self.L, self.L_prime
        while b >= L:
            b = (b + a) % Lp
        out = [b]
        for _ in range(min(d, L) - 1):
            b = (b + a) % Lp
            while b >= L:
                b = (b + a) % Lp
            out.append(b)
        return tuple(sorted(out))

    def degree(self, esi: int) -> int:
        return min(self.triple(esi)[0], self.L)

    def intermediate_symbols(self, source: np.ndarray) -> np.ndarray:
        """Place ``source`` (k rows) first and fill the precode symbols.

        Works row-wise on any array whose first axis indexes symbols.
        """
        source = np.asarray(source)
        if source.shape[0] != self.k:
            raise ValueError(f"expected {self.k} source symbols")
        inter = np.zeros((self.L,) + source.shape[1:], dtype=source.dtype)
        inter[: self.k] = source
        for b, cols in enumerate(self.ldpc):
            inter[self.k + b] = np.bitwise_xor.reduce(source[list(cols[:-1])], axis=0)
        for h, cols in enumerate(self.hdpc):
            inter[self.k + self.s + h] = np.bitwise_xor.reduce(inter[list(cols[:-1])], axis=0)
        return inter


def build_raptor(k: int, seed: int = 0) -> RaptorCodeSpec:
    if not MIN_K <= k <= MAX_K:
        raise ValueError(f"k must lie in [{MIN_K}, {MAX_K}], got {k}")
    _, s, h = derive_parameters(k)
    L = k + s + h
    # LDPC: each source symbol enters three of the s check symbols
    members: list[list[int]] = [[] for _ in range(s)]
    for i in range(k):
        a = 1 + (i // s) % (s - 1)
        b = i % s
        members[b].append(i)
        b = (b + a) % s
        members[b].append(i)
        b = (b + a) % s
        members[b].append(i)
    ldpc = tuple(tuple(sorted(set(m))) + (k + b,) for b, m in enumerate(members))
    # HDPC: bit h of the j-th weight-ceil(H/2) Gray code selects symbol j
    codes = gray_codes_with_weight(math.ceil(h / 2), k + s)
    hdpc = tuple(
        tuple(j for j in range(k + s) if codes[j] >> row & 1) + (k + s + row,)
        for row in range(h)
    )
    return RaptorCodeSpec(
        k=k, s=s, h=h, L=L, L_prime=next_prime(L), ldpc=ldpc, hdpc=hdpc,
        lt_distribution=r10_distribution(L), seed=seed,
    )


def lt_encode(spec, intermediate: np.ndarray, esi: int):
    """Return ``(neighbors, payload)`` for encoded symbol ``esi``."""
    nbrs = spec.neighbors(esi)
    payload = np.bitwise_xor.reduce(np.asarray(intermediate)[list(nbrs)], axis=0)
    return nbrs, payload


def min_overhead(spec) -> float:
    """Overhead at which the receiver holds ``k + 2h`` symbols."""
    h = getattr(spec, "h", 0)
    return 2 * h / spec.k


def received_threshold(k: int, eps: float) -> int:
    """Smallest whole symbol count reaching overhead ``eps``."""
    return k + math.ceil(round(eps * k, 9))
