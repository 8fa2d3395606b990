"""Analytical delay estimates for the droplet scheme."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

INV_E = math.exp(-1.0)
INV_E_LO = -1.2428753672788363e-17  # 1/e - INV_E, for the branch distance
# W0 = -1 + sum c_k p^k with p = sqrt(2 (e x + 1))
_BRANCH_SERIES = (1.0, -1.0 / 3.0, 11.0 / 72.0, -43.0 / 540.0, 769.0 / 17280.0,
                  -221.0 / 8505.0, 680863.0 / 43545600.0, -1963.0 / 204120.0)


def pbar(t: float, K: int, beta: float, sigma_d: float) -> float:
    """Expected number of droplets finished over ``K`` servers by time ``t``.

    The integrand ``floor((t - h) / sigma_d)`` is piecewise constant, so the
    integral telescopes to ``K * sum_{p=1}^{P} (1 - exp(-(t - p sigma_d)/beta))``
    with ``P = floor(t / sigma_d)``; the geometric sum is evaluated in closed
    form.
    """
    if t < 0 or sigma_d <= 0:
        raise ValueError("need t >= 0 and sigma_d > 0")
    P = math.floor(t / sigma_d)
    if P <= 0:
        return 0.0
    frac = max(0.0, (t - P * sigma_d) / beta)
    s = sigma_d / beta
    geo = math.expm1(-P * s) / math.expm1(-s)
    return K * (P - math.exp(-frac) * geo)


def pbar_upper(t: float, K: int, beta: float, sigma_d: float) -> float:
    x = t / beta
    return max(0.0, K * beta * (math.expm1(-x) + x) / sigma_d)


def pbar_lower(t: float, K: int, beta: float, sigma_d: float) -> float:
    x = t / beta
    em = math.expm1(-x)
    return max(0.0, K * (beta * (em + x) + sigma_d * em) / sigma_d)


def pbar_bounds(t: float, K: int, beta: float, sigma_d: float) -> tuple[float, float]:
    return pbar_lower(t, K, beta, sigma_d), pbar_upper(t, K, beta, sigma_d)


def _horner(coeffs, x: float) -> float:
    acc = 0.0
    for c in reversed(coeffs):
        acc = acc * x + c
    return acc


def lambert_w0(x: float) -> float:
    """Principal branch of the Lambert W function, by Halley iteration."""
    if x < -INV_E:
        if x > -INV_E - 1e-17:
            x = -INV_E
        else:
            raise ValueError(f"W0 undefined below -1/e, got {x!r}")
    if x == -INV_E:
        return -1.0
    if x == 0:
        return 0.0
    if x > 1e3:
        # solve w + log(w) = log(x), avoiding overflow in exp(w)
        lx = math.log(x)
        w = lx - math.log(lx)
        for _ in range(100):
            step = (w + math.log(w) - lx) * w / (w + 1)
            w -= step
            if abs(step) <= 1e-16 * w:
                break
        return w
    if x < -0.25:
        d = (x + INV_E) + INV_E_LO
        if d <= 0.0:
            return -1.0
        p = math.sqrt(2.0 * math.e * d)
        w = -1.0 + p * _horner(_BRANCH_SERIES, p)
        if p < 1e-3:
            # truncation error ~p^9; Halley would lose accuracy to cancellation here
            return w
    elif x <= 3.0:
        w = math.log1p(x)
    else:
        lx = math.log(x)
        w = lx - math.log(lx)
    for _ in range(100):
        ew = math.exp(w)
        f = w * ew - x
        wp1 = w + 1.0
        if wp1 == 0.0:
            break
        step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1))
        w -= step
        if abs(step) <= 4e-16 * (1.0 + abs(w)):
            break
    return w


def _one_plus_w0_exp(a: float) -> float:
    """``1 + W0(-exp(-1 - a))`` for ``a >= 0``, accurate also as ``a -> 0``.

    With ``v = 1 + w`` the defining equation becomes ``v + log(1 - v) = -a``,
    which stays well conditioned near the branch point.
    """
    if a < 0:
        raise ValueError("a must be nonnegative")
    if a == 0:
        return 0.0
    if a > 0.5:
        return 1.0 + lambert_w0(-math.exp(-1.0 - a))
    p = math.sqrt(-2.0 * math.expm1(-a))
    v = p - p * p / 3.0 + 11.0 / 72.0 * p**3
    for _ in range(100):
        f = v + math.log1p(-v) + a
        d1 = -v / (1.0 - v)
        d2 = -1.0 / (1.0 - v) ** 2
        step = 2.0 * f * d1 / (2.0 * d1 * d1 - f * d2)
        v -= step
        if abs(step) <= 1e-16 * v:
            break
    return v


def time_for_droplets_bounds(p: float, K: int, beta: float, sigma_d: float) -> tuple[float, float]:
    """Times by which ``p`` droplets are expected, bracketing the exact time.

    ``sigma_L`` inverts the upper count bound and ``sigma_U`` the lower one.
    """
    if p < 0:
        raise ValueError("p must be nonnegative")
    a = p * sigma_d / (K * beta)
    s = sigma_d / beta
    sigma_L = beta * (a + _one_plus_w0_exp(a))
    b = a + (s - math.log1p(s))
    sigma_U = beta * (s + a + _one_plus_w0_exp(b))
    return sigma_L, sigma_U


def _harmonic(n: int) -> np.ndarray:
    """Harmonic numbers H_0..H_n."""
    out = np.zeros(n + 1)
    out[1:] = np.cumsum(1.0 / np.arange(1, n + 1))
    return out


def waiting_term(q: int, K: int, beta: float, t: float) -> float:
    """Expected wait for the q-th server given the count available at ``t``."""
    if not 1 <= q <= K:
        raise ValueError("q must lie in 1..K")
    if q == 1:
        return 0.0
    H = _harmonic(K)
    j = np.arange(1, q)
    pmf = stats.binom.pmf(j, K, -math.expm1(-t / beta))
    mu = beta * (H[K - j] - H[K - q])
    return float(np.dot(pmf, mu))


def waiting_terms(K: int, beta: float, t: float) -> np.ndarray:
    """``waiting_term(q)`` for every ``q`` in 1..K, via its first differences.

    ``W(q+1) - W(q) = beta * Pr(1 <= G_t <= q) / (K - q)``.
    """
    pmf = stats.binom.pmf(np.arange(K + 1), K, -math.expm1(-t / beta))
    cdf = np.cumsum(pmf)
    out = np.zeros(K)
    if K > 1:
        q = np.arange(1, K)
        out[1:] = np.cumsum(beta * (cdf[q] - pmf[0]) / (K - q))
    return out


@dataclass(frozen=True)
class DelayEstimate:
    q: int
    v_bar_p: float
    wait_term: float
    d_reduce: float
    sigma_L: float
    sigma_U: float

    @property
    def d_map(self) -> float:
        return self.v_bar_p + self.wait_term

    @property
    def d_bar(self) -> float:
        return self.v_bar_p + self.wait_term + self.d_reduce


def dmap_approx(p: float, q: int, K: int, beta: float, sigma_d: float) -> float:
    sigma_L, sigma_U = time_for_droplets_bounds(p, K, beta, sigma_d)
    sigma_p = 0.5 * (sigma_L + sigma_U)
    return sigma_p + waiting_term(q, K, beta, sigma_p)


def delay_estimate(p: float, q: int, K: int, N: int, beta: float, sigma_d: float,
                   sigma_reduce: float) -> DelayEstimate:
    sigma_L, sigma_U = time_for_droplets_bounds(p, K, beta, sigma_d)
    sigma_p = 0.5 * (sigma_L + sigma_U)
    return DelayEstimate(
        q=q,
        v_bar_p=sigma_p,
        wait_term=waiting_term(q, K, beta, sigma_p),
        d_reduce=N / q * sigma_reduce,
        sigma_L=sigma_L,
        sigma_U=sigma_U,
    )


def delay_curve(p: float, K: int, N: int, beta: float, sigma_d: float,
                sigma_reduce: float) -> np.ndarray:
    """Estimated total delay for q = 1..K (index q - 1)."""
    sigma_L, sigma_U = time_for_droplets_bounds(p, K, beta, sigma_d)
    sigma_p = 0.5 * (sigma_L + sigma_U)
    q = np.arange(1, K + 1)
    return sigma_p + waiting_terms(K, beta, sigma_p) + N / q * sigma_reduce


def optimize_q(p: float, K: int, N: int, beta: float, sigma_d: float, sigma_reduce: float,
               candidates=None) -> int:
    """Reduce-server count minimizing the estimate.

    Scans ``candidates`` (default 1..K) in increasing order and stops at the
    first increase, which is safe because the estimate is convex in q.
    Ties keep the smaller q.
    """
    curve = delay_curve(p, K, N, beta, sigma_d, sigma_reduce)
    cands = range(1, K + 1) if candidates is None else sorted(candidates)
    best_q, best = None, math.inf
    for q in cands:
        d = curve[q - 1]
        if d < best:
            best_q, best = q, d
        elif d > best:
            break
    return best_q
