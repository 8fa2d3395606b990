"""One full run (map-shuffle plus reduce) of the scheme and its baselines."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..delay_analysis import delay_estimate, optimize_q
from ..fountain.profile import OverheadProfile
from ..runtime_model import StragglerModel, sample_availability
from .mapshuffle import fast_optimal, fast_round_robin, run_map_shuffle
from .params import SystemParams, divisors_up_to, place

SCHEMES = ("proposed", "ideal", "centralized", "uncoded")


def ideal_profile(params: SystemParams) -> OverheadProfile:
    k = params.k
    return OverheadProfile(k=k, eps_min=0.0, pf_curve=[(0.0, 0.0)], droplets_to_success={k: 1.0},
                           mean_decode_ops=0.0, sigma_reduce=0.0, code="ideal", l=params.l,
                           sigma_A=params.cost.sigma_A)


def _check_profile(params: SystemParams, profile: OverheadProfile, code: str) -> None:
    if profile.k != params.k:
        raise ValueError(f"profile is for k={profile.k}, parameters have k={params.k}")
    if profile.code != code:
        raise ValueError(f"profile is for code {profile.code!r}, expected {code!r}")


def required_droplets(params: SystemParams, profile: OverheadProfile, j: int,
                      rng: np.random.Generator) -> int:
    """Droplets vector ``j`` needs before it can be decoded."""
    if not 0 <= j < params.N:
        raise ValueError("vector index out of range")
    return int(draw_requirements(params, profile, rng, size=1)[0])


def draw_requirements(params: SystemParams, profile: OverheadProfile, rng: np.random.Generator,
                      size: int | None = None) -> np.ndarray:
    size = params.N if size is None else size
    _check_profile(params, profile, params.code)
    if params.code == "ideal":
        return np.full(size, params.k, dtype=np.int64)
    return profile.sample(rng, size).astype(np.int64)


def run_reduce(params: SystemParams, profile: OverheadProfile, q: int) -> float:
    if params.N % q:
        raise ValueError("q must divide N")
    if params.code == "ideal" or profile.code == "ideal":
        return 0.0
    return params.N / q * profile.sigma_reduce


def expected_total(params: SystemParams, profile: OverheadProfile) -> float:
    return params.N * profile.mean_droplets()


def choose_q(params: SystemParams, profile: OverheadProfile) -> int:
    """Explicit q if set, else the minimizer of the analytical estimate over divisors of N."""
    if params.q != "auto":
        return int(params.q)
    return optimize_q(expected_total(params, profile), params.K, params.N, params.beta,
                      params.sigma_d, profile.sigma_reduce,
                      candidates=divisors_up_to(params.N, params.K))


def analytical_delay(params: SystemParams, profile: OverheadProfile, q: int | None = None):
    q = choose_q(params, profile) if q is None else q
    return delay_estimate(expected_total(params, profile), q, params.K, params.N, params.beta,
                          params.sigma_d, profile.sigma_reduce)


@dataclass
class SimulationTrace:
    scheme: str
    h_sorted: np.ndarray = field(repr=False)
    requirements: np.ndarray | None = field(repr=False)
    q: int | None
    t_requirements: float
    h_q: float
    d_map: float
    d_reduce: float
    wasted_droplets: int | None = None
    halted_servers: int | None = None
    produced: int | None = None
    log: list | None = field(default=None, repr=False)

    @property
    def d_total(self) -> float:
        return self.d_map + self.d_reduce


def _streams(rng: np.random.Generator):
    # fixed number of draws, so schemes fed equal generators stay paired
    seeds = rng.integers(0, 2**63, size=4)
    return [np.random.default_rng(int(s)) for s in seeds]


def run_scheme(params: SystemParams, profile: OverheadProfile | None, strategy: str,
               rng: np.random.Generator, scheme: str = "proposed", q: int | None = None,
               engine: str = "fast", record: bool = False) -> SimulationTrace:
    """Simulate one trial of ``scheme``.

    ``proposed`` reduces on the ``q`` fastest servers; ``ideal`` uses a
    zero-overhead, zero-cost code with ``q = 1``; ``centralized`` has a
    master, available from time 0, decode all vectors one after another
    once every requirement is met; ``uncoded`` splits the rows of ``A``
    evenly and waits for the slowest server.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    if engine not in ("fast", "event"):
        raise ValueError("engine must be 'fast' or 'event'")
    s_avail, s_req, s_rr, s_place = _streams(rng)
    sample = sample_availability(StragglerModel(params.beta, params.K), s_avail)
    h = sample.h_sorted
    K, N = params.K, params.N

    if scheme == "uncoded":
        work = N * params.m / K * params.cost.row_cost(params.n)
        return SimulationTrace("uncoded", h, None, None, float(h[-1]) + work, float(h[-1]),
                               float(h[-1]) + work, 0.0)

    if scheme == "ideal":
        params = params.with_(code="ideal", q=1)
        profile = ideal_profile(params)
        q = 1
    elif profile is None:
        raise ValueError("a coded scheme needs an overhead profile")
    req = draw_requirements(params, profile, s_req)

    if scheme == "centralized":
        q_wait, d_reduce, q_rep = None, N * profile.sigma_reduce, None
    else:
        q = choose_q(params, profile) if q is None else q
        q_wait, q_rep = q, q
        d_reduce = run_reduce(params, profile, q)

    starts = s_rr.integers(0, N, size=K)
    h_q = float(h[q_wait - 1]) if q_wait else 0.0
    if engine == "event":
        placement = place(params, s_place, q=q_rep or 1)
        res = run_map_shuffle(h, placement.stored, req, params.sigma_d, strategy, q=q_wait,
                              rr_start=starts, record=record)
        return SimulationTrace(scheme, h, req, q_rep, res.t_requirements, res.h_q, res.d_map,
                               d_reduce, res.wasted, res.halted_servers, res.produced, res.log)
    if strategy == "optimal":
        t_req = fast_optimal(h, params.per_server, N, int(req.sum()), params.sigma_d)
    elif strategy == "round_robin":
        t_req = fast_round_robin(h, params.per_server, req, starts, params.sigma_d)
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    return SimulationTrace(scheme, h, req, q_rep, t_req, h_q, max(t_req, h_q), d_reduce)


def trial_rng(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *keys]))


@dataclass
class TrialSummary:
    d_map: np.ndarray
    d_reduce: np.ndarray
    d_total: np.ndarray
    q: int | None

    @property
    def mean(self) -> float:
        return float(self.d_total.mean())

    @property
    def stderr(self) -> float:
        n = len(self.d_total)
        return float(self.d_total.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0


def run_trials(params: SystemParams, profile: OverheadProfile | None, scheme: str, trials: int,
               seed: int, point: int = 0, strategy: str = "optimal", q: int | None = None,
               engine: str = "fast") -> TrialSummary:
    """Monte-Carlo trials; trial ``t`` uses stream ``(seed, point, t)`` for every scheme."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if scheme == "proposed" and q is None and profile is not None:
        q = choose_q(params, profile)
    dm = np.empty(trials)
    dr = np.empty(trials)
    q_used = None
    for t in range(trials):
        tr = run_scheme(params, profile, strategy, trial_rng(seed, point, t), scheme, q, engine)
        dm[t] = tr.d_map
        dr[t] = tr.d_reduce
        q_used = tr.q
    return TrialSummary(dm, dr, dm + dr, q_used)
