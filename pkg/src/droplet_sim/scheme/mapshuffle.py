"""Map-shuffle phase: droplet production by straggling servers.

Server ``k`` (the k-th to become available, 0-based) starts its first
droplet at ``h_sorted[k]`` and then computes back to back, one droplet every
``sigma_d`` seconds. The pair ``(i, j)`` (stored submatrix ``i``, input
vector ``j``) of a droplet is chosen when its computation starts. Transfers
are instantaneous, so a droplet counts for vector ``j`` the moment it is
finished. Vectors and servers are indexed from 0.

Two implementations are provided. :func:`run_map_shuffle` is an exact
discrete-event simulation that can log every droplet. The ``fast_*``
functions compute the same phase end time from closed-form droplet counts
and are what the Monte-Carlo experiments use.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np


class InfeasibleError(RuntimeError):
    """Requirements exceed what the servers can produce."""


@dataclass
class MapState:
    """What a server knows when it picks its next droplet."""

    requirements: np.ndarray
    supplied: np.ndarray  # delivered + in flight, per vector
    stored: tuple[tuple[int, ...], ...]
    next_i: np.ndarray  # (K, N): droplets this server has made for each vector
    rr_start: np.ndarray
    rr_count: np.ndarray
    server: int = 0

    @classmethod
    def fresh(cls, requirements, stored, rr_start=None) -> "MapState":
        req = np.asarray(requirements, dtype=np.int64)
        K, N = len(stored), len(req)
        if rr_start is None:
            rr_start = np.zeros(K, dtype=np.int64)
        return cls(req, np.zeros(N, dtype=np.int64), tuple(tuple(c) for c in stored),
                   np.zeros((K, N), dtype=np.int64), np.asarray(rr_start, dtype=np.int64),
                   np.zeros(K, dtype=np.int64))

    @property
    def N(self) -> int:
        return len(self.requirements)


def order_optimal(state: MapState):
    """Serve the most under-supplied vector this server can still help.

    Ties go to the lowest vector index; the submatrix is the next unused one
    at this server for that vector. Returns ``None`` when no droplet from
    this server would be useful.
    """
    k = state.server
    s = len(state.stored[k])
    deficit = state.requirements - state.supplied
    ok = (deficit > 0) & (state.next_i[k] < s)
    if not ok.any():
        return None
    j = int(np.argmax(np.where(ok, deficit, np.iinfo(np.int64).min)))
    i = state.stored[k][state.next_i[k, j]]
    state.next_i[k, j] += 1
    return i, j


def order_round_robin(state: MapState):
    """Cycle over vectors from a random start; one stored submatrix per lap."""
    k = state.server
    c = int(state.rr_count[k])
    s = len(state.stored[k])
    if c >= s * state.N:
        return None
    j = int((state.rr_start[k] + c) % state.N)
    i = state.stored[k][c // state.N]
    state.rr_count[k] += 1
    state.next_i[k, j] += 1
    return i, j


STRATEGIES = {"optimal": order_optimal, "round_robin": order_round_robin}


@dataclass
class MapResult:
    t_requirements: float
    h_q: float
    d_map: float
    produced: int
    wasted: int
    halted_servers: int
    blocked: int = 0  # refusals while some vector still lacked droplets
    log: list[tuple[float, int, int, int]] | None = field(default=None, repr=False)
    received: list[list[int]] | None = field(default=None, repr=False)


def _check_feasible(requirements, stored, n_coded=None):
    req = np.asarray(requirements)
    N = len(req)
    total = sum(len(c) for c in stored) * N
    if req.sum() > total:
        raise InfeasibleError(f"{int(req.sum())} droplets required, at most {total} producible")
    per_vector = sum(len(c) for c in stored)
    if req.max(initial=0) > per_vector:
        raise InfeasibleError("a vector needs more droplets than there are coded submatrices")


def run_map_shuffle(h_sorted, stored, requirements, sigma_d: float, strategy="optimal",
                    q: int | None = 1, rr_start=None, record: bool = False) -> MapResult:
    """Exact event-driven simulation of one map-shuffle phase.

    The phase ends at ``max(time all requirements are met, h_sorted[q-1])``;
    with ``q=None`` only the requirements matter.
    """
    pick = STRATEGIES[strategy] if isinstance(strategy, str) else strategy
    h = np.asarray(h_sorted, dtype=float)
    K = len(h)
    if len(stored) != K:
        raise ValueError("one storage list per server required")
    _check_feasible(requirements, stored)
    state = MapState.fresh(requirements, stored, rr_start)
    N = state.N
    delivered = np.zeros(N, dtype=np.int64)
    unmet = int(np.count_nonzero(delivered < state.requirements))
    # events: (time, kind, server, i, j); kind 0 = delivery, 1 = start
    events = [(float(h[k]), 1, k, -1, -1) for k in range(K)]
    heapq.heapify(events)
    log = [] if record else None
    received = [[] for _ in range(N)] if record else None
    produced = wasted = 0
    halted = blocked = 0
    t_req = 0.0 if unmet == 0 else None
    while t_req is None:
        if not events:
            raise InfeasibleError("servers ran out of useful droplets before requirements were met")
        t, kind, k, i, j = heapq.heappop(events)
        if kind == 0:
            produced += 1
            if log is not None:
                log.append((t, k, i, j))
            if delivered[j] >= state.requirements[j]:
                wasted += 1
            else:
                if received is not None:
                    received[j].append(i)
                delivered[j] += 1
                if delivered[j] == state.requirements[j]:
                    unmet -= 1
                    if unmet == 0:
                        t_req = t
            continue
        state.server = k
        choice = pick(state)
        if choice is None:
            halted += 1
            if state.supplied.sum() < state.requirements.sum():
                blocked += 1
            continue
        i, j = choice
        state.supplied[j] += 1
        heapq.heappush(events, (t + sigma_d, 0, k, i, j))
        heapq.heappush(events, (t + sigma_d, 1, k, -1, -1))
    h_q = float(h[q - 1]) if q else 0.0
    return MapResult(t_req, h_q, max(t_req, h_q), produced, wasted, halted, blocked, log, received)


def _completions(h: np.ndarray, cap: np.ndarray, sigma_d: float, t: float) -> np.ndarray:
    """Droplets each server has finished by time t."""
    c = np.floor((t - h) / sigma_d)
    return np.clip(c, 0, cap).astype(np.int64)


def _last_event(h, cap, sigma_d, t) -> float:
    c = _completions(h, cap, sigma_d, t)
    done = c > 0
    return float(np.max(h[done] + c[done] * sigma_d))


def _first_time(h, cap, sigma_d, ok) -> float:
    """Smallest completion time at which ``ok(counts)`` holds (monotone)."""
    lo = 0.0
    hi = float(np.max(h + cap * sigma_d))
    if not ok(_completions(h, cap, sigma_d, hi)):
        raise InfeasibleError("requirements cannot be met even after every server finishes")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if ok(_completions(h, cap, sigma_d, mid)):
            hi = mid
        else:
            lo = mid
    return _last_event(h, cap, sigma_d, hi)


def fast_optimal(h_sorted, per_server, N: int, total_required: int, sigma_d: float) -> float:
    """Time the ``total_required``-th useful droplet finishes under optimal ordering.

    Exact whenever no server runs out of useful pairs before the end (the
    greedy rule then keeps every server busy); otherwise a lower bound.
    """
    h = np.asarray(h_sorted, dtype=float)
    cap = np.broadcast_to(np.asarray(per_server, dtype=np.int64) * N, h.shape)
    if total_required <= 0:
        return 0.0
    return _first_time(h, cap, sigma_d, lambda c: c.sum() >= total_required)


def rr_vector_counts(counts: np.ndarray, starts: np.ndarray, N: int) -> np.ndarray:
    """Droplets per vector when server k made ``counts[k]`` round-robin droplets from ``starts[k]``."""
    laps, rem = np.divmod(counts, N)
    diff = np.zeros(N + 1, dtype=np.int64)
    sel = rem > 0
    a = starts[sel]
    b = a + rem[sel]
    np.add.at(diff, a, 1)
    wrap = b > N
    np.add.at(diff, np.minimum(b, N), -1)
    # intervals that wrap past N - 1 continue at 0
    np.add.at(diff, np.zeros(int(wrap.sum()), dtype=np.int64), 1)
    np.add.at(diff, b[wrap] - N, -1)
    return laps.sum() + np.cumsum(diff[:N])


def fast_round_robin(h_sorted, per_server, requirements, starts, sigma_d: float) -> float:
    """Exact time all requirements are met under round-robin ordering."""
    h = np.asarray(h_sorted, dtype=float)
    req = np.asarray(requirements, dtype=np.int64)
    N = len(req)
    starts = np.asarray(starts, dtype=np.int64)
    cap = np.broadcast_to(np.asarray(per_server, dtype=np.int64) * N, h.shape)
    if req.max(initial=0) <= 0:
        return 0.0
    return _first_time(h, cap, sigma_d, lambda c: np.all(rr_vector_counts(c, starts, N) >= req))
