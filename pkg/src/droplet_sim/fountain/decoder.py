"""Inactivation (maximum-likelihood) decoding of binary fountain codes.

Peeling resolves one unknown per degree-1 row. When peeling stalls the
active column with the highest active degree is inactivated (lowest index on
ties) and peeling resumes. Each resolved unknown is then an affine function
of the inactivated unknowns; the remaining rows give a small dense system in
the inactivated unknowns, solved by elimination over GF(2), after which the
resolved unknowns are back-substituted.

Payload work is counted in symbol operations: one XOR of two length-``l``
rows is one operation. Copies are free.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

ACTIVE, RESOLVED, INACTIVE = 0, 1, 2


class DecodeFailure(Exception):
    """The received system does not have full column rank."""

    def __init__(self, L: int, rank: int):
        super().__init__(f"rank {rank} < {L} unknowns")
        self.L = L
        self.rank = rank


@dataclass
class ConstraintSystem:
    """Binary linear system over ``L`` unknown symbols.

    ``cols[r]`` lists the unknowns XORed together in row ``r`` and
    ``payloads[r]`` is the row's right-hand side (a length-``l`` symbol).
    ``payloads`` may be ``None`` for structure-only decoding. Rows flagged
    ``dense`` skip peeling and go straight to the inactivated core.
    """

    L: int
    cols: list[tuple[int, ...]]
    payloads: np.ndarray | None = None
    dense: list[bool] | None = None

    def __post_init__(self):
        if self.dense is None:
            self.dense = [False] * len(self.cols)
        if len(self.dense) != len(self.cols):
            raise ValueError("dense flags do not match rows")
        if self.payloads is not None and len(self.payloads) != len(self.cols):
            raise ValueError("payload count does not match rows")
        cleaned = []
        for cs in self.cols:
            cs = tuple(cs)
            if cs and (min(cs) < 0 or max(cs) >= self.L):
                raise ValueError("neighbor index out of range")
            if len(set(cs)) != len(cs):
                # repeated neighbors cancel in characteristic 2
                odd = {c for c in cs if cs.count(c) % 2}
                cs = tuple(sorted(odd))
            cleaned.append(cs)
        self.cols = cleaned

    @property
    def n_rows(self) -> int:
        return len(self.cols)


@dataclass
class DecodeResult:
    symbols: np.ndarray | None
    ops: int
    n_inactive: int
    peel_ops: int = 0
    core_ops: int = 0
    backsub_ops: int = 0


@dataclass
class _Basis:
    """Row-echelon basis of the core, keyed by leading bit."""

    rows: dict = field(default_factory=dict)

    def reduce(self, mask: int) -> tuple[int, list[int]]:
        used = []
        while mask:
            top = mask.bit_length() - 1
            piv = self.rows.get(top)
            if piv is None:
                break
            mask ^= piv[0]
            used.append(top)
        return mask, used


class InactivationDecoder:
    """Decoder state for one system; peeling runs at construction.

    After construction the decoder can also absorb further rows with
    :meth:`add_row`, which keeps an exact rank count. This is how the
    overhead simulations find the first received count at which decoding
    succeeds without restarting from scratch.
    """

    def __init__(self, system: ConstraintSystem):
        self.system = system
        L = system.L
        cols = system.cols
        dense = system.dense
        n = len(cols)
        self.L = L
        state = bytearray(L)
        col_rows: list[list[int]] = [[] for _ in range(L)]
        deg = [0] * n
        for r in range(n):
            if dense[r]:
                continue
            cs = cols[r]
            deg[r] = len(cs)
            for c in cs:
                col_rows[c].append(r)
        col_deg = [len(x) for x in col_rows]
        used = [False] * n
        ripple = deque(r for r in range(n) if deg[r] == 1)
        order: list[tuple[int, int]] = []
        inactive: list[int] = []
        remaining = L

        while remaining:
            while ripple:
                r = ripple.popleft()
                if used[r] or deg[r] != 1:
                    continue
                for c in cols[r]:
                    if state[c] == ACTIVE:
                        break
                state[c] = RESOLVED
                used[r] = True
                remaining -= 1
                order.append((c, r))
                for c2 in cols[r]:
                    col_deg[c2] -= 1
                for r2 in col_rows[c]:
                    if not used[r2]:
                        deg[r2] -= 1
                        if deg[r2] == 1:
                            ripple.append(r2)
            if not remaining:
                break
            degs = np.array(col_deg)
            degs[np.frombuffer(bytes(state), dtype=np.uint8) != ACTIVE] = -1
            c = int(degs.argmax())
            state[c] = INACTIVE
            inactive.append(c)
            remaining -= 1
            for r2 in col_rows[c]:
                if not used[r2]:
                    deg[r2] -= 1
                    if deg[r2] == 1:
                        ripple.append(r2)

        self.state = state
        self.order = order
        self.inactive = inactive
        self.pos = {c: i for i, c in enumerate(inactive)}
        self.used = used
        masks = [0] * L
        for c, b in self.pos.items():
            masks[c] = 1 << b
        for c, r in order:
            m = 0
            for c2 in cols[r]:
                if c2 != c:
                    m ^= masks[c2]
            masks[c] = m
        self.masks = masks
        self.core_rows = [r for r in range(n) if not used[r]]
        self.basis = _Basis()
        self._core_done = False

    @property
    def n_inactive(self) -> int:
        return len(self.inactive)

    @property
    def rank(self) -> int:
        """Rank of the rows absorbed so far (only exact once the core is reduced)."""
        return len(self.order) + len(self.basis.rows)

    def row_mask(self, cols) -> int:
        m = 0
        masks = self.masks
        for c in cols:
            m ^= masks[c]
        return m

    def _absorb(self, mask: int, tag) -> bool:
        rest, _ = self.basis.reduce(mask)
        if rest:
            self.basis.rows[rest.bit_length() - 1] = (rest, tag)
            return True
        return False

    def reduce_core(self) -> bool:
        """Absorb the core rows into the basis; True when the system is full rank."""
        if not self._core_done:
            for r in self.core_rows:
                if self.complete:
                    break
                self._absorb(self.row_mask(self.system.cols[r]), r)
            self._core_done = True
        return self.complete

    @property
    def complete(self) -> bool:
        return len(self.basis.rows) == len(self.inactive)

    def add_row(self, cols) -> bool:
        """Absorb an extra row (structure only); True if it raised the rank."""
        self.reduce_core()
        if self.complete:
            return False
        return self._absorb(self.row_mask(cols), None)

    def solve(self, count_only: bool = False) -> DecodeResult:
        """Run the payload phase on the original system.

        With ``count_only`` the XORs are tallied but not performed, which is
        what the overhead simulations need.
        """
        sys_ = self.system
        cols = sys_.cols
        n_inactive = len(self.inactive)
        state = self.state
        pay = None if count_only else sys_.payloads
        if pay is None and not count_only:
            raise ValueError("payloads required unless count_only")

        # peel: value of each resolved column given inactive columns = 0
        peel_ops = 0
        partial = None
        if pay is not None:
            partial = np.zeros((self.L,) + pay.shape[1:], dtype=pay.dtype)
        for c, r in self.order:
            terms = [c2 for c2 in cols[r] if c2 != c and state[c2] == RESOLVED]
            peel_ops += len(terms)
            if partial is not None:
                v = pay[r].copy()
                for c2 in terms:
                    v ^= partial[c2]
                partial[c] = v

        # core: fresh elimination, building right-hand sides lazily
        core_ops = 0
        pivots: dict[int, tuple[int, object]] = {}
        for r in self.core_rows:
            if len(pivots) == n_inactive:
                break
            mask = self.row_mask(cols[r])
            if not mask:
                continue
            resolved = [c2 for c2 in cols[r] if state[c2] == RESOLVED]
            rhs = None
            if partial is not None:
                rhs = pay[r].copy()
                for c2 in resolved:
                    rhs ^= partial[c2]
            ops_here = len(resolved)
            while mask:
                top = mask.bit_length() - 1
                piv = pivots.get(top)
                if piv is None:
                    break
                mask ^= piv[0]
                ops_here += 1
                if rhs is not None:
                    rhs ^= piv[1]
            core_ops += ops_here
            if mask:
                pivots[mask.bit_length() - 1] = (mask, rhs)
        if len(pivots) < n_inactive:
            raise DecodeFailure(self.L, len(self.order) + len(pivots))

        solved: dict[int, object] = {}
        for b in range(n_inactive):
            mask, rhs = pivots[b]
            lower = mask ^ (1 << b)
            while lower:
                low = lower & -lower
                bit = low.bit_length() - 1
                core_ops += 1
                if rhs is not None:
                    rhs = rhs ^ solved[bit]
                lower ^= low
            solved[b] = rhs

        # back-substitution, choosing the cheaper of two equivalent routes
        backsub_ops = 0
        values = None
        if partial is not None:
            values = partial
            for c, b in self.pos.items():
                values[c] = solved[b]
        for c, r in self.order:
            m = self.masks[c]
            if not m:
                continue
            via_mask = bin(m).count("1")
            via_row = len(cols[r]) - 1
            if via_mask <= via_row:
                backsub_ops += via_mask
                if values is not None:
                    v = partial[c]
                    while m:
                        low = m & -m
                        v ^= solved[low.bit_length() - 1]
                        m ^= low
                    values[c] = v
            else:
                backsub_ops += via_row
                if values is not None:
                    v = pay[r].copy()
                    for c2 in cols[r]:
                        if c2 != c:
                            v ^= values[c2]
                    values[c] = v
        return DecodeResult(
            symbols=values,
            ops=peel_ops + core_ops + backsub_ops,
            n_inactive=n_inactive,
            peel_ops=peel_ops,
            core_ops=core_ops,
            backsub_ops=backsub_ops,
        )


def inactivation_decode(system: ConstraintSystem, count_only: bool = False) -> DecodeResult:
    """Decode ``system``; raises :class:`DecodeFailure` when it is rank deficient."""
    if system.n_rows < 1:
        raise ValueError("system has no rows")
    return InactivationDecoder(system).solve(count_only=count_only)


def gf2_rank(matrix: np.ndarray) -> int:
    """Rank over GF(2) by dense Gaussian elimination."""
    a = (np.asarray(matrix) & 1).astype(np.uint8).copy()
    rows, ncols = a.shape
    rank = 0
    for c in range(ncols):
        piv = np.nonzero(a[rank:, c])[0]
        if piv.size == 0:
            continue
        p = rank + piv[0]
        if p != rank:
            a[[rank, p]] = a[[p, rank]]
        hit = np.nonzero(a[:, c])[0]
        hit = hit[hit != rank]
        a[hit] ^= a[rank]
        rank += 1
        if rank == rows:
            break
    return rank


def incidence_matrix(system: ConstraintSystem) -> np.ndarray:
    out = np.zeros((system.n_rows, system.L), dtype=np.uint8)
    for r, cs in enumerate(system.cols):
        for c in cs:
            out[r, c] ^= 1
    return out
