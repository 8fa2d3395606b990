import itertools
import math

import numpy as np
import pytest

from droplet_sim.fountain import (
    LTCode,
    OverheadProfile,
    RobustSolitonParams,
    build_raptor,
    estimate_profile,
    min_overhead,
    robust_soliton,
)
from droplet_sim.scheme import (
    InfeasibleError,
    InfeasibleParams,
    MapState,
    SystemParams,
    divisors_up_to,
    draw_requirements,
    fast_optimal,
    fast_round_robin,
    ideal_profile,
    make_params,
    order_optimal,
    order_round_robin,
    place,
    required_droplets,
    run_map_shuffle,
    run_reduce,
    run_scheme,
    run_trials,
    sigma_K,
    solve_params,
    verify_end_to_end,
)
from droplet_sim.scheme.pipeline import trial_rng


@pytest.fixture(scope="module")
def desk():
    """Desk-scale configuration with a small R10 profile."""
    params = make_params(10, 512, 8, 20, 16, u=8)
    spec = build_raptor(params.k)
    prof = estimate_profile(spec, min_overhead(spec), 300, rng_seed=0, l=params.l,
                            cost=params.cost, ops_trials=50)
    return params, prof


# --- parameters ------------------------------------------------------------

def test_padding_example():
    p = make_params(625, 33333, 33, 6250, 32)
    assert (p.m_padded, p.padding, p.k) == (33344, 11, 1042)
    assert p.per_server == 5 and p.n_coded == 3125
    assert p.beta == pytest.approx(sigma_K(33333, 33, 6250, 625, p.cost))


@pytest.mark.parametrize("K", [10, 100, 200])
def test_solve_params_contract(K):
    p = solve_params(K)
    assert p.m == 1000 * p.n and p.N == 10 * K
    assert 0.9e7 <= p.m * p.n * p.N / K <= 1.1e7
    assert 900 < p.m / p.l < 1100
    assert p.m_padded % p.l == 0
    assert p.r == p.per_server * p.l * p.K
    assert 1 / K <= p.eta <= 1
    for q in divisors_up_to(p.N, p.K):
        assert p.N % q == 0


def test_solve_params_rejects_bad_target():
    with pytest.raises(InfeasibleParams):
        solve_params(10, workload=-1)
    with pytest.raises(InfeasibleParams):
        solve_params(10, workload=1.0)


def test_params_invariants():
    with pytest.raises(InfeasibleParams):
        SystemParams(K=4, m=64, n=2, N=4, l=8, r=8 * 3)  # not a whole number per server
    with pytest.raises(InfeasibleParams):
        SystemParams(K=4, m=64, n=2, N=6, l=8, r=32, q=4)  # q does not divide N
    with pytest.raises(InfeasibleParams):
        SystemParams(K=2, m=64, n=2, N=4, l=8, r=8 * 2 * 9)  # more than k per server


def test_place_examples():
    rng = np.random.default_rng(0)
    one = place(make_params(1, 64, 2, 6, 8, rate=1.0), rng)
    assert len(one.stored) == 1 and len(one.stored[0]) == 8
    assert one.outputs == (tuple(range(6)),)
    p = SystemParams(K=4, m=64, n=2, N=12, l=8, r=64)
    pl = place(p, np.random.default_rng(1), q=3)
    assert [len(c) for c in pl.stored] == [2] * 4
    assert sorted(itertools.chain(*pl.stored)) == list(range(8))
    assert sorted(itertools.chain(*pl.outputs)) == list(range(12))
    assert [len(w) for w in pl.outputs] == [4] * 3
    assert place(p, np.random.default_rng(1), q=3) == pl


# --- requirements ----------------------------------------------------------

def test_required_droplets_ideal():
    p = make_params(8, 1024 * 4, 2, 16, 4, code="ideal")
    prof = ideal_profile(p)
    assert required_droplets(p, prof, 3, np.random.default_rng(0)) == 1024


def test_required_droplets_r10_region():
    p = make_params(8, 1024 * 4, 2, 16, 4)
    spec = build_raptor(1024)
    prof = estimate_profile(spec, min_overhead(spec), 30, rng_seed=1, ops_trials=1)
    draws = draw_requirements(p, prof, np.random.default_rng(0))
    assert np.all(draws >= 1024 + 2 * spec.h)
    assert abs(np.median(draws) - 1044) <= 0.01 * 1044


def test_required_droplets_lt_region():
    p = make_params(8, 1024 * 4, 2, 16, 4, code="lt")
    code = LTCode(1024, robust_soliton(RobustSolitonParams(1024, 0.03, 0.5)), seed=0)
    prof = estimate_profile(code, 0.3, 20, rng_seed=1, ops_trials=1)
    draws = draw_requirements(p, prof, np.random.default_rng(0))
    assert abs(np.median(draws) - 1331) <= 0.02 * 1331


def test_profile_mismatch_rejected(desk):
    params, prof = desk
    with pytest.raises(ValueError):
        draw_requirements(params.with_(code="lt"), prof, np.random.default_rng(0))
    with pytest.raises(ValueError):
        draw_requirements(make_params(10, 1024, 8, 20, 16), prof, np.random.default_rng(0))


# --- ordering strategies -----------------------------------------------------

def test_optimal_picks_most_undersupplied():
    st = MapState.fresh([2, 1], [(0, 1, 2)])
    assert order_optimal(st) == (0, 0)
    st = MapState.fresh([0, 3, 1], [(4, 5)])
    assert order_optimal(st)[1] == 1
    st = MapState.fresh([0, 0], [(4, 5)])
    assert order_optimal(st) is None


def test_round_robin_order():
    st = MapState.fresh([5, 5, 5], [(7, 8)], rr_start=[2])
    picks = [order_round_robin(st) for _ in range(6)]
    assert [j for _, j in picks] == [2, 0, 1, 2, 0, 1]
    assert [i for i, _ in picks] == [7, 7, 7, 8, 8, 8]
    assert len(set(picks)) == 6
    assert order_round_robin(st) is None


def test_round_robin_lap_covers_all_vectors():
    N = 7
    st = MapState.fresh([1] * N, [tuple(range(4))], rr_start=[5])
    for lap in range(4):
        js = [order_round_robin(st)[1] for _ in range(N)]
        assert sorted(js) == list(range(N))


# --- map-shuffle -------------------------------------------------------------

def test_single_server_single_droplet():
    res = run_map_shuffle([0.7], [(0,)], [1], 0.25, q=1)
    assert res.d_map == pytest.approx(0.95)


def hand_schedule_all_zero(K, per_server, req, sigma_d):
    """Round-by-round enumeration: every server delivers one droplet per slot."""
    need = list(req)
    used = [[0] * len(req) for _ in range(K)]
    t = 0
    while any(x > 0 for x in need):
        t += 1
        for k in range(K):
            cand = [j for j in range(len(req)) if need[j] > 0 and used[k][j] < per_server]
            if cand:
                j = max(cand, key=lambda j: (need[j], -j))
                need[j] -= 1
                used[k][j] += 1
    return t * sigma_d


@pytest.mark.parametrize("K,req", [(3, [4, 3]), (5, [7, 7, 2]), (4, [1]), (6, [5, 5, 5, 5])])
def test_all_available_at_zero(K, req):
    s = 6
    stored = [tuple(range(k * s, (k + 1) * s)) for k in range(K)]
    res = run_map_shuffle(np.zeros(K), stored, req, 0.5, q=1)
    expect = math.ceil(sum(req) / K) * 0.5
    assert res.d_map == pytest.approx(expect)
    assert hand_schedule_all_zero(K, s, req, 0.5) == pytest.approx(expect)
    assert fast_optimal(np.zeros(K), s, len(req), sum(req), 0.5) == pytest.approx(expect)


def test_infeasible_requirements():
    with pytest.raises(InfeasibleError):
        run_map_shuffle([0.0, 0.0], [(0,), (1,)], [3], 1.0)
    with pytest.raises(InfeasibleError):
        fast_optimal(np.zeros(2), 1, 1, 3, 1.0)


def event_case(seed, strategy, K=8, N=6, s=3):
    rng = np.random.default_rng(seed)
    h = np.sort(rng.exponential(1.0, K))
    stored = [tuple(range(k * s, (k + 1) * s)) for k in range(K)]
    req = rng.integers(5, 12, size=N)
    starts = rng.integers(0, N, size=K)
    q = int(rng.integers(1, K + 1))
    res = run_map_shuffle(h, stored, req, 0.2, strategy, q=q, rr_start=starts, record=True)
    return h, stored, req, starts, q, res


@pytest.mark.parametrize("seed", range(30))
def test_conservation_and_termination(seed):
    for strategy in ("optimal", "round_robin"):
        h, _, req, _, q, res = event_case(seed, strategy)
        delivered = sum(len(r) for r in res.received)
        assert res.produced == delivered + res.wasted
        assert delivered == req.sum()
        assert res.produced == len(res.log)
        assert res.d_map == max(res.t_requirements, h[q - 1])
        assert res.t_requirements == max(t for t, *_ in res.log)
        pairs = [(k, i, j) for _, k, i, j in res.log]
        assert len(set(pairs)) == len(pairs)
        if strategy == "optimal" and res.blocked == 0:
            assert res.wasted == 0


@pytest.mark.parametrize("seed", range(40))
def test_fast_engines_against_event(seed):
    h, stored, req, starts, _, rr = event_case(seed, "round_robin")
    assert fast_round_robin(h, len(stored[0]), req, starts, 0.2) == pytest.approx(rr.t_requirements, rel=1e-12)
    _, _, _, _, _, opt = event_case(seed, "optimal")
    fast = fast_optimal(h, len(stored[0]), len(req), int(req.sum()), 0.2)
    assert fast <= opt.t_requirements * (1 + 1e-12)
    if opt.blocked == 0:
        assert fast == pytest.approx(opt.t_requirements, rel=1e-12)


def test_run_scheme_engines_agree(desk):
    params, prof = desk
    for t in range(20):
        a = run_scheme(params, prof, "round_robin", trial_rng(5, 0, t), engine="fast")
        b = run_scheme(params, prof, "round_robin", trial_rng(5, 0, t), engine="event")
        assert a.d_total == pytest.approx(b.d_total, rel=1e-12)
        assert np.array_equal(a.requirements, b.requirements)


# --- reduce and pipeline -----------------------------------------------------

def test_run_reduce_examples(desk):
    params, prof = desk
    assert run_reduce(params.with_(code="ideal"), ideal_profile(params), 1) == 0.0
    big = make_params(625, 33333, 33, 6250, 32)
    stub = OverheadProfile(k=big.k, eps_min=0.0, pf_curve=[(0.0, 0.0)],
                           droplets_to_success={big.k: 1.0}, mean_decode_ops=1.0,
                           sigma_reduce=prof.sigma_reduce)
    assert run_reduce(big, stub, 25) == pytest.approx(250 * prof.sigma_reduce)
    assert run_reduce(params, prof, 5) == pytest.approx(2 * run_reduce(params, prof, 10))
    with pytest.raises(ValueError):
        run_reduce(params, prof, 3)


def test_uncoded_single_server():
    p = make_params(1, 64, 4, 3, 8, rate=1.0, beta=2.0)
    tr = run_scheme(p, None, "optimal", np.random.default_rng(0), scheme="uncoded")
    row = (4 - 1) * p.cost.sigma_A + 4 * p.cost.sigma_M
    assert tr.d_total == pytest.approx(tr.h_sorted[0] + 3 * 64 * row)


def test_trace_time_law(desk):
    params, prof = desk
    for scheme in ("proposed", "ideal", "centralized"):
        for t in range(10):
            tr = run_scheme(params, prof, "optimal", trial_rng(2, 0, t), scheme=scheme)
            assert tr.d_map == max(tr.t_requirements, tr.h_q)
            assert tr.d_total == tr.d_map + tr.d_reduce


def test_ideal_dominates_proposed(desk):
    params, prof = desk
    ideal = run_trials(params, prof, "ideal", 1000, 3)
    prop = run_trials(params, prof, "proposed", 1000, 3)
    assert ideal.mean <= prop.mean
    assert np.mean(ideal.d_map <= prop.d_map + 1e-9) > 0.99


def test_mean_delay_nondecreasing_in_beta(desk):
    params, prof = desk
    means = [run_trials(params.with_(beta=params.beta * f), prof, "proposed", 300, 4, q=2).mean
             for f in (0.1, 0.5, 1.0, 3.0)]
    assert all(b >= a for a, b in zip(means, means[1:]))


def test_round_robin_not_better_than_optimal(desk):
    params, prof = desk
    opt = run_trials(params, prof, "proposed", 300, 6, strategy="optimal")
    rr = run_trials(params, prof, "proposed", 300, 6, strategy="round_robin")
    assert rr.mean >= opt.mean


def test_trials_are_deterministic(desk):
    params, prof = desk
    a = run_trials(params, prof, "proposed", 50, 9, point=2)
    b = run_trials(params, prof, "proposed", 50, 9, point=2)
    assert np.array_equal(a.d_total, b.d_total)
    with pytest.raises(ValueError):
        run_trials(params, prof, "proposed", 0, 9)


# --- end-to-end verification -------------------------------------------------

def test_verify_desk_config():
    p = make_params(10, 512, 8, 20, 16, u=8)
    rep = verify_end_to_end(p, np.random.default_rng(0))
    assert rep.ok and rep.n_vectors == 20 and rep.mismatch is None


def test_verify_zero_matrix():
    p = make_params(10, 512, 8, 20, 16, u=8)
    assert verify_end_to_end(p, np.random.default_rng(1), zero_matrix=True).ok


def test_verify_ideal_single_vector():
    p = make_params(4, 128, 8, 1, 16, code="ideal")
    rep = verify_end_to_end(p, np.random.default_rng(2))
    assert rep.ok and rep.droplets_used == [p.k]


def test_verify_detects_corruption():
    p = make_params(10, 512, 8, 20, 16, u=8)
    rep = verify_end_to_end(p, np.random.default_rng(0), corrupt=True)
    assert not rep.ok and rep.mismatch is not None


def test_verify_padding_rows():
    p = make_params(5, 500, 8, 5, 16, u=8)
    assert p.padding == 12
    assert verify_end_to_end(p, np.random.default_rng(3)).ok


def test_verify_rejects_large_m():
    with pytest.raises(ValueError):
        verify_end_to_end(make_params(10, 8192, 8, 20, 16), np.random.default_rng(0))

