"""End-to-end check: encode A, simulate which droplets exist, decode each y_j."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..fountain.decoder import DecodeFailure, inactivation_decode
from ..fountain.profile import code_system
from ..fountain.raptor import build_raptor, min_overhead, received_threshold
from ..fountain.soliton import LTCode, RobustSolitonParams, robust_soliton
from ..gf_core import get_field, gf_solve, mat_vec
from ..runtime_model import StragglerModel, sample_availability
from .mapshuffle import run_map_shuffle
from .params import SystemParams, place

MAX_M = 4096


def cauchy_matrix(rows: int, cols: int, gf) -> np.ndarray:
    """``G[i, a] = 1 / (x_i + y_a)``; every square submatrix is invertible."""
    if rows + cols > gf.order:
        raise ValueError("field too small for the Cauchy construction")
    out = np.zeros((rows, cols), dtype=np.int64)
    for i in range(rows):
        for a in range(cols):
            out[i, a] = gf.inverse(i ^ (rows + a))
    return out


@dataclass
class VerifyReport:
    ok: bool
    n_vectors: int
    droplets_used: list[int]
    decode_attempts: int
    mismatch: tuple[int, int] | None = None
    details: list[str] = field(default_factory=list)

    def lines(self) -> list[str]:
        out = [f"vectors={self.n_vectors}", f"decode_attempts={self.decode_attempts}",
               "droplets=" + ",".join(map(str, self.droplets_used))]
        if self.mismatch is None:
            out.append("result=bit-exact" if self.ok else "result=failed")
        else:
            out.append(f"result=mismatch vector={self.mismatch[0]} row={self.mismatch[1]}")
        return out + self.details


def _make_code(params: SystemParams, k: int):
    if params.code == "r10":
        return build_raptor(k)
    if params.code == "lt":
        return LTCode(k, robust_soliton(RobustSolitonParams(k, params.lt_c, params.lt_delta)))
    return None


def _coded_blocks(params, code, blocks, gf):
    """Coded submatrices C_0..C_{r/l-1}, each l x n."""
    n_coded = params.n_coded
    if code is None:
        G = cauchy_matrix(n_coded, params.k, gf)
        out = np.zeros((n_coded,) + blocks.shape[1:], dtype=gf.dtype)
        for i in range(n_coded):
            for a in range(params.k):
                out[i] ^= gf.mul(blocks[a], int(G[i, a]))
        return out, G
    inter = code.intermediate_symbols(blocks) if hasattr(code, "intermediate_symbols") else blocks
    out = np.stack([np.bitwise_xor.reduce(inter[list(code.neighbors(i))], axis=0)
                    for i in range(n_coded)])
    return out, None


def _first_inconsistency(code, symbols, esis, payload):
    """First (droplet, row) whose payload differs from re-encoding ``symbols``, else None."""
    for i, got in zip(esis, payload):
        bad = np.flatnonzero(np.bitwise_xor.reduce(symbols[list(code.neighbors(i))], axis=0) != got)
        if bad.size:
            return int(i), int(bad[0])
    return None


def verify_end_to_end(params: SystemParams, rng: np.random.Generator, *, zero_matrix: bool = False,
                      corrupt: bool = False, strategy: str = "optimal",
                      max_attempts: int | None = None) -> VerifyReport:
    """Multiply real random data through the whole scheme and compare bit by bit.

    Requirements start at the decoding threshold; if some vector fails to
    decode, every requirement grows by one and the schedule is re-simulated.
    ``corrupt`` flips one element of one received droplet (negative control).
    """
    if params.m > MAX_M:
        raise ValueError(f"verification is desk-scale only (m <= {MAX_M})")
    gf = get_field(params.u)
    k, l, n, N = params.k, params.l, params.n, params.N
    A = np.zeros((params.m, n), dtype=gf.dtype) if zero_matrix else gf.random((params.m, n), rng)
    X = gf.random((N, n), rng)
    A_pad = np.zeros((params.m_padded, n), dtype=gf.dtype)
    A_pad[: params.m] = A
    blocks = A_pad.reshape(k, l, n)
    code = _make_code(params, k)
    coded, G = _coded_blocks(params, code, blocks, gf)

    if code is None:
        need = k
    else:
        eps = params.eps_min if params.eps_min is not None else min_overhead(code)
        need = received_threshold(k, eps)
    need = min(need, params.n_coded)
    sample = sample_availability(StragglerModel(params.beta, params.K), rng)
    placement = place(params, rng, q=1)
    starts = rng.integers(0, N, size=params.K)
    max_attempts = max_attempts or params.n_coded - need + 1

    attempts = 0
    while True:
        attempts += 1
        req = np.full(N, need, dtype=np.int64)
        res = run_map_shuffle(sample.h_sorted, placement.stored, req, params.sigma_d, strategy,
                              q=1, rr_start=starts, record=True)
        results = []
        failed = False
        for j in range(N):
            got = sorted(res.received[j])
            payload = np.stack([mat_vec(coded[i], X[j], gf)[0] for i in got])
            if corrupt and j == 0:
                payload[0, 0] ^= 1
            try:
                if code is None:
                    sol = gf_solve(G[got[:k]], payload[:k], gf)
                    consistent = None
                else:
                    full = inactivation_decode(code_system(code, got, payload)).symbols
                    sol = full[:k]
                    consistent = _first_inconsistency(code, full, got, payload)
            except (DecodeFailure, np.linalg.LinAlgError):
                failed = True
                break
            results.append((len(got), sol.reshape(-1)[: params.m], consistent))
        if not failed:
            break
        if attempts >= max_attempts or need >= params.n_coded:
            return VerifyReport(False, N, [], attempts, details=["decoding did not succeed"])
        need += 1

    used = []
    for j, (count, y, consistent) in enumerate(results):
        used.append(count)
        expect = mat_vec(A, X[j], gf)[0]
        bad = np.nonzero(y != expect)[0]
        if bad.size:
            return VerifyReport(False, N, used, attempts, mismatch=(j, int(bad[0])))
        if consistent is not None:
            i, row = consistent
            return VerifyReport(False, N, used, attempts, details=[
                f"vector {j}: droplet {i} row {row} disagrees with re-encoding of the decoded symbols"])
    return VerifyReport(True, N, used, attempts)
