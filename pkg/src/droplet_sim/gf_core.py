"""Arithmetic over GF(2^u) with log/antilog tables, plus the operation cost model."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

DEFAULT_POLYNOMIALS = {8: 0x11B, 16: 0x1100B}


def clmul(a: int, b: int) -> int:
    """Carry-less product of two polynomials over GF(2) given as bit patterns."""
    result = 0
    while b:
        if b & 1:
            result ^= a
        a <<= 1
        b >>= 1
    return result


def poly_mod(a: int, mod: int) -> int:
    deg = mod.bit_length() - 1
    while a.bit_length() - 1 >= deg:
        a ^= mod << (a.bit_length() - 1 - deg)
    return a


def is_irreducible(poly: int) -> bool:
    """Trial division by every polynomial of degree 1..deg/2."""
    deg = poly.bit_length() - 1
    if deg < 1:
        return False
    for divisor in range(2, 1 << (deg // 2 + 1)):
        if poly_mod(poly, divisor) == 0:
            return False
    return True


@dataclass(frozen=True)
class FieldParams:
    u: int = 8
    reduction_polynomial: int = 0x11B

    def __post_init__(self):
        if self.u not in (8, 16):
            raise ValueError(f"field exponent must be 8 or 16, got {self.u}")
        if self.reduction_polynomial.bit_length() - 1 != self.u:
            raise ValueError("reduction polynomial must have degree u")
        if not is_irreducible(self.reduction_polynomial):
            raise ValueError(f"{self.reduction_polynomial:#x} is reducible")

    @property
    def order(self) -> int:
        return 1 << self.u


class GaloisField:
    """Table-driven GF(2^u).

    Elements are integers in ``[0, 2^u)``. Multiplication uses log/antilog
    tables built over a primitive element found at construction time (``x``
    itself is not primitive for the AES polynomial 0x11B, so we search).
    """

    def __init__(self, params: FieldParams | None = None):
        self.params = params or FieldParams()
        self.u = self.params.u
        self.order = self.params.order
        poly = self.params.reduction_polynomial
        dtype = np.uint8 if self.u == 8 else np.uint16
        self.dtype = dtype
        n = self.order - 1
        for g in range(2, self.order):
            exp = np.empty(2 * n, dtype=np.int64)
            log = np.full(self.order, -1, dtype=np.int64)
            x = 1
            ok = True
            for i in range(n):
                if log[x] != -1:
                    ok = False
                    break
                exp[i] = x
                log[x] = i
                x = poly_mod(clmul(x, g), poly)
            if ok:
                break
        else:  # pragma: no cover - irreducible poly always has a primitive element
            raise RuntimeError("no primitive element")
        exp[n:] = exp[:n]
        log[0] = 0
        self.generator = g
        self.exp = exp
        self.log = log

    def add(self, a, b):
        return a ^ b

    def mul(self, a, b):
        if np.isscalar(a) and np.isscalar(b):
            if a == 0 or b == 0:
                return 0
            return int(self.exp[self.log[a] + self.log[b]])
        a = np.asarray(a)
        b = np.asarray(b)
        out = self.exp[self.log[a] + self.log[b]]
        out = np.where((a == 0) | (b == 0), 0, out)
        return out.astype(self.dtype)

    def inverse(self, a: int) -> int:
        if a == 0:
            raise ZeroDivisionError("zero has no inverse")
        return int(self.exp[(self.order - 1 - self.log[a]) % (self.order - 1)])

    def div(self, a, b: int):
        return self.mul(a, self.inverse(b))

    def random(self, shape, rng: np.random.Generator) -> np.ndarray:
        return rng.integers(0, self.order, size=shape, dtype=np.int64).astype(self.dtype)

    def check(self, values) -> None:
        arr = np.asarray(values)
        if arr.size and (arr.min() < 0 or arr.max() >= self.order):
            raise ValueError("entries outside the field")


@lru_cache(maxsize=None)
def get_field(u: int = 8) -> GaloisField:
    return GaloisField(FieldParams(u, DEFAULT_POLYNOMIALS[u]))


def gf_add(a: int, b: int) -> int:
    return a ^ b


def gf_mul(a: int, b: int, gf: GaloisField | None = None) -> int:
    return (gf or get_field()).mul(a, b)


def mat_vec(A, x, gf: GaloisField | None = None):
    """Compute ``y = A x`` over the field.

    Returns ``(y, (n_add, n_mul))`` where the counts are those of the
    schoolbook evaluation: ``m(n-1)`` additions and ``mn`` multiplications.
    """
    gf = gf or get_field()
    A = np.asarray(A)
    x = np.asarray(x)
    if A.ndim != 2 or x.ndim != 1 or A.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: {A.shape} times {x.shape}")
    gf.check(A)
    gf.check(x)
    m, n = A.shape
    prods = gf.mul(A, x[None, :])
    y = np.bitwise_xor.reduce(prods, axis=1).astype(gf.dtype)
    return y, (m * (n - 1), m * n)


def mat_mat(A, X, gf: GaloisField | None = None) -> np.ndarray:
    """``A @ X`` over the field, column by column of the inner dimension."""
    gf = gf or get_field()
    A = np.asarray(A)
    X = np.asarray(X)
    if A.shape[1] != X.shape[0]:
        raise ValueError(f"dimension mismatch: {A.shape} times {X.shape}")
    out = np.zeros((A.shape[0], X.shape[1]), dtype=gf.dtype)
    for t in range(A.shape[1]):
        out ^= gf.mul(A[:, t, None], X[None, t, :])
    return out


@dataclass(frozen=True)
class CostModel:
    """Seconds per field addition (``sigma_A``) and multiplication (``sigma_M``)."""

    sigma_A: float
    sigma_M: float

    def __post_init__(self):
        if self.sigma_A <= 0 or self.sigma_M <= 0:
            raise ValueError("operation costs must be strictly positive")

    @classmethod
    def from_u(cls, u: int) -> "CostModel":
        """u/64 per addition and u*log2(u) per multiplication, hidden constants set to 1."""
        if u < 2:
            raise ValueError("u must be at least 2")
        return cls(u / 64, u * math.log2(u))

    def row_cost(self, n: int) -> float:
        """Time for one length-n inner product."""
        return (n - 1) * self.sigma_A + n * self.sigma_M


def droplet_cost(l: int, n: int, cost: CostModel) -> float:
    """Time for one server to compute a droplet: l inner products of length n."""
    if l < 1 or n < 1:
        raise ValueError("l and n must be positive")
    return l * cost.row_cost(n)


def gf_solve(A, B, gf: GaloisField | None = None) -> np.ndarray:
    """Solve ``A X = B`` over the field for square nonsingular ``A``."""
    gf = gf or get_field()
    A = np.array(A, dtype=np.int64)
    B = np.array(B, dtype=np.int64)
    vec = B.ndim == 1
    if vec:
        B = B[:, None]
    n = A.shape[0]
    if A.shape != (n, n) or B.shape[0] != n:
        raise ValueError("need a square system")
    for c in range(n):
        nz = np.nonzero(A[c:, c])[0]
        if nz.size == 0:
            raise np.linalg.LinAlgError("singular matrix over the field")
        p = c + nz[0]
        if p != c:
            A[[c, p]] = A[[p, c]]
            B[[c, p]] = B[[p, c]]
        inv = gf.inverse(int(A[c, c]))
        A[c] = gf.mul(A[c], inv)
        B[c] = gf.mul(B[c], inv)
        for r in np.nonzero(A[:, c])[0]:
            if r == c:
                continue
            f = int(A[r, c])
            A[r] ^= gf.mul(A[c], f).astype(np.int64)
            B[r] ^= gf.mul(B[c], f).astype(np.int64)
    X = B.astype(gf.dtype)
    return X[:, 0] if vec else X
