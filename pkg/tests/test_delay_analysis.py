import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from droplet_sim.delay_analysis import (
    delay_curve,
    delay_estimate,
    dmap_approx,
    lambert_w0,
    optimize_q,
    pbar,
    pbar_bounds,
    pbar_lower,
    pbar_upper,
    time_for_droplets_bounds,
    waiting_term,
    waiting_terms,
)
from droplet_sim.runtime_model import StragglerModel, order_stat_mean


def random_sets(n, seed):
    rng = np.random.default_rng(seed)
    for _ in range(n):
        K = int(rng.integers(1, 1000))
        beta = float(10 ** rng.uniform(-2, 3))
        sigma_d = float(beta * 10 ** rng.uniform(-4, 0.5))
        p = float(10 ** rng.uniform(0, 7))
        yield p, K, beta, sigma_d


# --- expected droplet count -------------------------------------------------

def test_pbar_zero_before_first_droplet():
    assert pbar(0.05, 10, 1.0, 0.1) == 0.0
    assert pbar(0.1, 10, 1.0, 0.1) == 0.0
    with pytest.raises(ValueError):
        pbar(-1.0, 10, 1.0, 0.1)


def test_pbar_monte_carlo():
    rng = np.random.default_rng(0)
    total, n = 0.0, 0
    for _ in range(10):
        h = rng.exponential(1.0, size=(100_000, 10))
        total += np.floor(np.maximum(0.0, 1.0 - h) / 0.1).sum()
        n += 100_000
    assert pbar(1.0, 10, 1.0, 0.1) == pytest.approx(total / n, rel=0.005)


def test_pbar_matches_quadrature():
    K, beta, sd, t = 7, 2.0, 0.3, 3.1
    f = lambda h: math.floor((t - h) / sd) * math.exp(-h / beta) / beta
    pts = [0.0] + [t - p * sd for p in range(int(t / sd), 0, -1)] + [t]
    val = K * float(mpmath.quad(f, sorted(set(pts))))
    assert pbar(t, K, beta, sd) == pytest.approx(val, rel=1e-10)


def test_pbar_nondecreasing():
    ts = np.linspace(0, 10, 500)
    vals = [pbar(t, 5, 1.3, 0.17) for t in ts]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_bounds_bracket_exactly():
    rng = np.random.default_rng(1)
    for _ in range(5):
        K = int(rng.integers(1, 500))
        beta = float(10 ** rng.uniform(-1, 2))
        sd = float(beta * 10 ** rng.uniform(-3, 0))
        for t in np.concatenate([[0.0], np.geomspace(1e-3 * beta, 20 * beta, 99)]):
            lo, hi = pbar_bounds(float(t), K, beta, sd)
            v = pbar(float(t), K, beta, sd)
            assert lo <= v <= hi
            assert hi - lo <= K


def test_bounds_symbolic_cross_check():
    mpmath.mp.dps = 50
    K, beta, sd, t = 10, 1.0, 0.1, 1.0
    x = mpmath.mpf(t) / beta
    upper = K * beta / mpmath.mpf(sd) * (x - 1 + mpmath.e ** (-x))
    lower = upper - K * (1 - mpmath.e ** (-x))
    lo, hi = pbar_bounds(t, K, beta, sd)
    assert hi == pytest.approx(float(upper), rel=1e-14)
    assert lo == pytest.approx(float(lower), rel=1e-14)


# --- Lambert W ---------------------------------------------------------------

def test_lambert_examples():
    assert lambert_w0(0.0) == 0.0
    assert lambert_w0(math.e) == pytest.approx(1.0, abs=1e-15)
    assert lambert_w0(-math.exp(-1.0)) == -1.0
    with pytest.raises(ValueError):
        lambert_w0(-0.4)


def residual_ok(x):
    w = lambert_w0(x)
    return abs(w * math.exp(w) - x) <= 1e-12 * max(1.0, abs(x))


def test_lambert_residual_near_branch_point():
    for k in range(1, 17):
        assert residual_ok(-math.exp(-1.0) + 10.0**-k)


@settings(max_examples=300)
@given(st.floats(0.0, 10.0))
def test_lambert_residual_small(x):
    assert residual_ok(x)


@settings(max_examples=200)
@given(st.floats(-0.36, 1e12))
def test_lambert_matches_scipy(x):
    ref = special.lambertw(x, 0).real
    assert lambert_w0(x) == pytest.approx(ref, rel=1e-9, abs=1e-9)


@pytest.mark.parametrize("x", [-0.3678794411714423, -math.exp(-1.0) + 1e-12, -0.3, -0.1, 1e-8,
                               0.5, 2.0, 7.5, 1e3, 1e3 + 1, 1e8, 1e300])
def test_lambert_high_precision(x):
    mpmath.mp.dps = 50
    ref = float(mpmath.lambertw(mpmath.mpf(x)))
    assert lambert_w0(x) == pytest.approx(ref, rel=1e-13, abs=1e-13)


# --- time inversions ---------------------------------------------------------

def test_inversion_identities():
    for p, K, beta, sd in random_sets(100, 2):
        lo, hi = time_for_droplets_bounds(p, K, beta, sd)
        assert pbar_upper(lo, K, beta, sd) == pytest.approx(p, rel=1e-9)
        assert pbar_lower(hi, K, beta, sd) == pytest.approx(p, rel=1e-9)
        assert 0 <= lo <= hi


def test_inversion_zero_droplets():
    lo, _ = time_for_droplets_bounds(0.0, 10, 2.0, 0.1)
    assert lo == 0.0
    with pytest.raises(ValueError):
        time_for_droplets_bounds(-1.0, 10, 2.0, 0.1)


def test_exact_time_lies_between_bounds():
    for p, K, beta, sd in random_sets(20, 3):
        lo, hi = time_for_droplets_bounds(p, K, beta, sd)
        assert pbar(lo, K, beta, sd) <= p * (1 + 1e-9)
        assert pbar(hi, K, beta, sd) >= p * (1 - 1e-9)


# --- map-phase approximation and total estimate ----------------------------

def test_dmap_q1_is_vbar():
    p, K, beta, sd = 5000.0, 50, 1.0, 0.01
    lo, hi = time_for_droplets_bounds(p, K, beta, sd)
    assert dmap_approx(p, 1, K, beta, sd) == 0.5 * (lo + hi)


def test_waiting_term_bounded_by_order_mean():
    for K in (2, 10, 100):
        for beta in (0.5, 3.0):
            model = StragglerModel(beta, K)
            for q in range(1, K + 1, max(1, K // 7)):
                for t in (0.0, 0.1 * beta, beta, 5 * beta):
                    assert waiting_term(q, K, beta, t) <= order_stat_mean(model, q) + 1e-12


def test_waiting_term_direct_sum():
    K, q, beta, t = 12, 7, 1.5, 0.8
    F = -math.expm1(-t / beta)
    direct = sum(math.comb(K, j) * F**j * (1 - F) ** (K - j)
                 * order_stat_mean(StragglerModel(beta, K - j), q - j) for j in range(1, q))
    assert waiting_term(q, K, beta, t) == pytest.approx(direct, rel=1e-12)


@pytest.mark.parametrize("K,beta,t", [(1, 1.0, 0.5), (10, 1.0, 0.3), (300, 2.0, 1.0), (625, 5.0, 9.0)])
def test_waiting_terms_vector_matches_scalar(K, beta, t):
    vec = waiting_terms(K, beta, t)
    for q in range(1, K + 1, max(1, K // 25)):
        assert vec[q - 1] == pytest.approx(waiting_term(q, K, beta, t), rel=1e-9, abs=1e-12)


def test_waiting_term_negligible_for_long_phase():
    K, q, beta = 100, 10, 1.0
    sd = 0.001
    p = K * 50 / sd  # about 50 beta worth of droplets
    est = delay_estimate(p, q, K, 1, beta, sd, 0.0)
    assert est.wait_term < 0.01 * est.d_bar


def test_estimate_components():
    args = (2e4, 8, 40, 80, 1.0, 0.02)
    e0 = delay_estimate(*args, 0.0)
    assert e0.d_bar == pytest.approx(dmap_approx(2e4, 8, 40, 1.0, 0.02))
    e1 = delay_estimate(*args, 0.3)
    e2 = delay_estimate(*args, 0.6)
    assert e2.d_reduce == 2 * e1.d_reduce
    assert (e2.v_bar_p, e2.wait_term) == (e1.v_bar_p, e1.wait_term)
    assert e1.d_bar == pytest.approx(e1.v_bar_p + e1.wait_term + e1.d_reduce)
    assert e1.sigma_L <= e1.v_bar_p <= e1.sigma_U
    assert min(e1.v_bar_p, e1.wait_term, e1.d_reduce) >= 0


def test_estimate_componentwise_monotone_in_q():
    p, K, N, beta, sd, sr = 3e4, 60, 120, 1.0, 0.01, 0.05
    ests = [delay_estimate(p, q, K, N, beta, sd, sr) for q in range(1, K + 1)]
    assert all(b.d_map >= a.d_map for a, b in zip(ests, ests[1:]))
    assert all(b.d_reduce <= a.d_reduce for a, b in zip(ests, ests[1:]))


def test_curve_matches_estimates():
    p, K, N, beta, sd, sr = 3e4, 60, 120, 1.0, 0.01, 0.05
    curve = delay_curve(p, K, N, beta, sd, sr)
    for q in (1, 7, 30, 60):
        assert curve[q - 1] == pytest.approx(delay_estimate(p, q, K, N, beta, sd, sr).d_bar, rel=1e-12)


# --- q optimizer -------------------------------------------------------------

def test_optimize_q_limits():
    assert optimize_q(1e4, 50, 100, 1.0, 0.01, 0.0) == 1
    assert optimize_q(1e4, 50, 100, 1.0, 0.01, 1e6) == 50


def test_optimize_q_equals_exhaustive_argmin():
    rng = np.random.default_rng(4)
    for _ in range(100):
        K = int(rng.integers(1, 200))
        N = int(K * rng.integers(1, 20))
        beta = float(10 ** rng.uniform(-1, 1))
        sd = float(beta * 10 ** rng.uniform(-4, -1))
        p = float(N * rng.uniform(50, 2000))
        sr = float(beta * 10 ** rng.uniform(-6, 0))
        vals = [delay_estimate(p, q, K, N, beta, sd, sr).d_bar for q in range(1, K + 1)]
        assert optimize_q(p, K, N, beta, sd, sr) == int(np.argmin(vals)) + 1


@settings(max_examples=30)
@given(st.integers(2, 120), st.floats(1e-5, 1e-1), st.integers(0, 2**31))
def test_optimize_q_restricted_candidates(K, sr, seed):
    rng = np.random.default_rng(seed)
    cands = sorted(set(rng.integers(1, K + 1, size=6).tolist()))
    p, N, beta, sd = 1e4, 2 * K, 1.0, 0.01
    curve = delay_curve(p, K, N, beta, sd, sr)
    best = min(cands, key=lambda q: (curve[q - 1], q))
    assert optimize_q(p, K, N, beta, sd, sr, candidates=cands) == best
