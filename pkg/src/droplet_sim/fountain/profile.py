"""Monte-Carlo overhead characterization of fountain codes."""

from __future__ import annotations

import json
import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..gf_core import CostModel
from .decoder import ConstraintSystem, InactivationDecoder, inactivation_decode
from .raptor import received_threshold
from .soliton import LTCode, RobustSolitonParams, robust_soliton

ESI_SPACE = 65521


class IdealCode:
    """Stub for a zero-overhead code: any ``k`` symbols decode, at no cost."""

    name = "ideal"
    h = 0

    def __init__(self, k: int):
        self.k = k
        self.L = k


@dataclass
class OverheadProfile:
    k: int
    eps_min: float
    pf_curve: list[tuple[float, float]]
    droplets_to_success: dict[int, float]
    mean_decode_ops: float
    sigma_reduce: float
    code: str = "r10"
    l: int = 1
    sigma_A: float = 1.0
    trials: int = 0
    seed: int = 0
    counts: list[int] = field(default_factory=list, repr=False)

    def __post_init__(self):
        if any(c < self.k for c in self.droplets_to_success):
            raise ValueError("success counts below k")
        ps = [p for _, p in self.pf_curve]
        if any(b > a for a, b in zip(ps, ps[1:])):
            raise ValueError("failure-probability curve must be nonincreasing")
        self._support = np.array(sorted(self.droplets_to_success), dtype=np.int64)
        probs = np.array([self.droplets_to_success[c] for c in self._support])
        self._cdf = np.cumsum(probs / probs.sum())
        self._cdf[-1] = 1.0

    @property
    def threshold(self) -> int:
        return received_threshold(self.k, self.eps_min)

    def pf(self, eps: float) -> float:
        """Failure probability at overhead ``eps`` (domain starts at ``eps_min``)."""
        if eps < self.eps_min - 1e-12:
            raise ValueError("failure probability is only estimated from eps_min upward")
        n = self.k + math.floor(round(eps * self.k, 9))
        return float(1.0 - self._cdf_at(n))

    def _cdf_at(self, n: int) -> float:
        idx = np.searchsorted(self._support, n, side="right")
        return 0.0 if idx == 0 else float(self._cdf[idx - 1])

    def mean_droplets(self) -> float:
        return float(sum(c * p for c, p in self.droplets_to_success.items()))

    def sample(self, rng: np.random.Generator, size=None):
        """Draw received-symbol counts at which decoding succeeds."""
        u = rng.random(size)
        return self._support[np.searchsorted(self._cdf, u, side="right")]

    def with_cost(self, l: int, cost: CostModel) -> "OverheadProfile":
        """Same statistics, decode time rescaled to droplet size ``l``."""
        return OverheadProfile(
            k=self.k, eps_min=self.eps_min, pf_curve=self.pf_curve,
            droplets_to_success=self.droplets_to_success,
            mean_decode_ops=self.mean_decode_ops,
            sigma_reduce=self.mean_decode_ops * l * cost.sigma_A,
            code=self.code, l=l, sigma_A=cost.sigma_A, trials=self.trials, seed=self.seed,
        )

    def to_json(self) -> str:
        doc = {
            "k": self.k,
            "code": self.code,
            "eps_min": self.eps_min,
            "pf_curve": [[e, p] for e, p in self.pf_curve],
            "droplets_to_success": {str(c): p for c, p in sorted(self.droplets_to_success.items())},
            "mean_decode_ops": self.mean_decode_ops,
            "sigma_reduce": self.sigma_reduce,
            "l": self.l,
            "sigma_A": self.sigma_A,
            "trials": self.trials,
            "seed": self.seed,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "OverheadProfile":
        doc = json.loads(text)
        return cls(
            k=doc["k"], eps_min=doc["eps_min"],
            pf_curve=[(float(e), float(p)) for e, p in doc["pf_curve"]],
            droplets_to_success={int(c): float(p) for c, p in doc["droplets_to_success"].items()},
            mean_decode_ops=doc["mean_decode_ops"], sigma_reduce=doc["sigma_reduce"],
            code=doc.get("code", "r10"), l=doc.get("l", 1), sigma_A=doc.get("sigma_A", 1.0),
            trials=doc.get("trials", 0), seed=doc.get("seed", 0),
        )

    def save(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8", newline="\n")

    @classmethod
    def load(cls, path) -> "OverheadProfile":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def trial_rng(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *keys]))


def _esi_stream(rng: np.random.Generator, batch: int):
    seen: set[int] = set()
    while True:
        for e in rng.choice(ESI_SPACE, size=min(batch, ESI_SPACE), replace=False):
            e = int(e)
            if e not in seen:
                seen.add(e)
                yield e


def code_system(code, esis, payloads=None) -> ConstraintSystem:
    """Precode rows (zero right-hand side) followed by one row per received symbol."""
    pre = code.precode_rows()
    cols = pre + [code.neighbors(e) for e in esis]
    dense = code.precode_dense() + [False] * len(esis)
    if payloads is not None:
        payloads = np.asarray(payloads)
        zeros = np.zeros((len(pre),) + payloads.shape[1:], dtype=payloads.dtype)
        payloads = np.concatenate([zeros, payloads])
    return ConstraintSystem(code.L, cols, payloads, dense)


def simulate_trial(code, n0: int, rng: np.random.Generator, want_ops: bool,
                   max_extra: int | None = None) -> tuple[int, int | None]:
    """Receive symbols until ML decoding succeeds.

    Decoding is first attempted with ``n0`` symbols; each further symbol is
    absorbed incrementally. Returns the first successful count and, if
    requested, the symbol-operation count of decoding at that count.
    """
    max_extra = 4 * code.k if max_extra is None else max_extra
    stream = _esi_stream(rng, n0 + 32)
    esis = [next(stream) for _ in range(n0)]
    dec = InactivationDecoder(code_system(code, esis))
    if dec.reduce_core():
        ops = dec.solve(count_only=True).ops if want_ops else None
        return n0, ops
    while not dec.complete:
        if len(esis) - n0 >= max_extra:
            raise RuntimeError(f"no decoding success within {max_extra} extra symbols")
        e = next(stream)
        esis.append(e)
        dec.add_row(code.neighbors(e))
    ops = None
    if want_ops:
        ops = inactivation_decode(code_system(code, esis), count_only=True).ops
    return len(esis), ops


def _run_trials(code, n0, seed, start, stop, ops_trials):
    out = []
    for t in range(start, stop):
        count, ops = simulate_trial(code, n0, trial_rng(seed, t), want_ops=t < ops_trials)
        out.append((count, ops))
    return out


def estimate_profile(code, eps_min: float, trials: int, rng_seed: int = 0, *,
                     l: int = 1, cost: CostModel | None = None,
                     ops_trials: int | None = None, threads: int = 1) -> OverheadProfile:
    """Characterize ``code`` past overhead ``eps_min``.

    Every trial draws fresh random encoded-symbol IDs; trial ``t`` uses the
    RNG stream ``(rng_seed, t)`` so results do not depend on ``threads``.
    Decoding cost is averaged over the first ``ops_trials`` trials.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    cost = cost or CostModel(1.0, 1.0)
    k = code.k
    n0 = received_threshold(k, eps_min)
    if code.name == "ideal":
        return OverheadProfile(
            k=k, eps_min=0.0, pf_curve=[(0.0, 0.0)], droplets_to_success={k: 1.0},
            mean_decode_ops=0.0, sigma_reduce=0.0, code="ideal", l=l,
            sigma_A=cost.sigma_A, trials=trials, seed=rng_seed, counts=[k] * trials,
        )
    ops_trials = trials if ops_trials is None else min(ops_trials, trials)
    if threads > 1:
        bounds = np.linspace(0, trials, threads + 1).astype(int)
        with ProcessPoolExecutor(threads) as pool:
            parts = pool.map(_run_trials, [code] * threads, [n0] * threads, [rng_seed] * threads,
                             bounds[:-1], bounds[1:], [ops_trials] * threads)
            results = [r for part in parts for r in part]
    else:
        results = _run_trials(code, n0, rng_seed, 0, trials, ops_trials)
    counts = [c for c, _ in results]
    ops = [o for _, o in results if o is not None]
    return profile_from_counts(code, eps_min, counts, ops, l=l, cost=cost, seed=rng_seed)


def profile_from_counts(code, eps_min, counts, ops, *, l, cost, seed) -> OverheadProfile:
    k = code.k
    n0 = received_threshold(k, eps_min)
    trials = len(counts)
    hist = Counter(counts)
    dist = {c: hist[c] / trials for c in sorted(hist)}
    arr = np.array(counts)
    curve = []
    for n in range(n0, int(arr.max()) + 1):
        curve.append(((n - k) / k, float(np.count_nonzero(arr > n)) / trials))
    mean_ops = float(np.mean(ops)) if ops else 0.0
    return OverheadProfile(
        k=k, eps_min=eps_min, pf_curve=curve, droplets_to_success=dist,
        mean_decode_ops=mean_ops, sigma_reduce=mean_ops * l * cost.sigma_A,
        code=code.name, l=l, sigma_A=cost.sigma_A, trials=trials, seed=seed,
        counts=list(counts),
    )


C_GRID = (0.01, 0.03, 0.1, 0.3)
DELTA_GRID = (0.01, 0.1, 0.5, 0.9)


def optimize_soliton(k: int, eps_min: float, pf_target: float, trial_budget: int,
                     rng_seed: int = 0, c_grid=C_GRID, delta_grid=DELTA_GRID,
                     slack: float = 0.0) -> RobustSolitonParams:
    """Grid search for the cheapest-to-decode robust Soliton meeting ``pf_target``.

    A grid point is feasible when its estimated failure probability at
    ``eps_min`` is at most ``pf_target + slack``. Among feasible points the
    one with the lowest mean decoding cost wins; ties go to the earlier grid
    point.
    """
    if not 0 < pf_target <= 1:
        raise ValueError("pf_target must lie in (0, 1]")
    n0 = received_threshold(k, eps_min)
    best = None
    for gi, (c, delta) in enumerate((c, d) for c in c_grid for d in delta_grid):
        params = RobustSolitonParams(k, c, delta)
        code = LTCode(k, robust_soliton(params), seed=rng_seed)
        fails = 0
        ops = []
        for t in range(trial_budget):
            rng = trial_rng(rng_seed, gi, t)
            stream = _esi_stream(rng, n0)
            esis = [next(stream) for _ in range(n0)]
            dec = InactivationDecoder(code_system(code, esis))
            if dec.reduce_core():
                ops.append(dec.solve(count_only=True).ops)
            else:
                fails += 1
        pf = fails / trial_budget
        if pf > pf_target + slack or not ops:
            continue
        score = float(np.mean(ops))
        if best is None or score < best[0]:
            best = (score, params)
    if best is None:
        raise ValueError("no grid point meets the failure-probability target")
    return best[1]


def estimate_pf(code, eps: float, trials: int, rng_seed: int = 0) -> float:
    """Plain Monte-Carlo failure rate with exactly ``k(1+eps)`` received symbols."""
    n0 = received_threshold(code.k, eps)
    fails = 0
    for t in range(trials):
        rng = trial_rng(rng_seed, t)
        stream = _esi_stream(rng, n0)
        esis = [next(stream) for _ in range(n0)]
        if not InactivationDecoder(code_system(code, esis)).reduce_core():
            fails += 1
    return fails / trials
