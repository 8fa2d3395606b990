"""Command-line experiment runner.

Subcommands: ``sweep``, ``estimate``, ``pf-table`` and ``verify``. See the
README for the JSON configuration schema and the CSV columns.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fountain.profile import IdealCode, OverheadProfile, estimate_profile
from .fountain.raptor import build_raptor, min_overhead
from .fountain.soliton import LTCode, RobustSolitonParams, robust_soliton
from .gf_core import CostModel
from .scheme.mapshuffle import InfeasibleError
from .scheme.params import InfeasibleParams, SystemParams, make_params, solve_params
from .scheme.pipeline import analytical_delay, ideal_profile, run_trials
from .scheme.verify import verify_end_to_end

SCHEME_NAMES = ("proposed-r10", "proposed-lt", "ideal", "centralized-r10", "uncoded")

SWEEP_COLUMNS = ("sweep_variable", "value", "scheme", "strategy", "q", "trials", "mean_d_map",
                 "mean_d_reduce", "mean_d_total", "normalized_d_total", "stderr_d_total",
                 "analytical_d_bar")
ESTIMATE_COLUMNS = ("sweep_variable", "value", "scheme", "q", "analytical_d_bar", "v_bar_p",
                    "wait_term", "d_reduce", "simulated_mean", "simulated_stderr",
                    "relative_error")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """One sweep. ``beta`` sweep values are multiples of ``sigma_K``."""

    variable: str
    values: list[float]
    params: dict
    schemes: list[str] = field(default_factory=lambda: ["proposed-r10", "ideal", "uncoded"])
    strategy: str = "optimal"
    trials: int = 1000
    seed: int | None = None
    profile_trials: int = 10_000
    profile_ops_trials: int = 500
    profile_cache: str | None = None
    output: str | None = None
    lt: dict = field(default_factory=lambda: {"c": 0.03, "delta": 0.5, "eps_min": 0.3})

    def __post_init__(self):
        if self.variable not in ("K", "beta"):
            raise ConfigError("sweep variable must be 'K' or 'beta'")
        if not self.values:
            raise ConfigError("sweep value list is empty")
        if list(self.values) != sorted(self.values):
            raise ConfigError("sweep values must be sorted")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        bad = [s for s in self.schemes if s not in SCHEME_NAMES]
        if bad:
            raise ConfigError(f"unknown schemes: {bad}")
        if self.strategy not in ("optimal", "round_robin"):
            raise ConfigError("strategy must be 'optimal' or 'round_robin'")

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        sweep = doc.pop("sweep", None)
        if not isinstance(sweep, dict) or not {"variable", "values"} <= set(sweep):
            raise ConfigError("config needs a 'sweep' object with 'variable' and 'values'")
        if "params" not in doc:
            raise ConfigError("config needs a 'params' object")
        known = set(cls.__dataclass_fields__) - {"variable", "values"}
        extra = set(doc) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        return cls(variable=sweep["variable"], values=list(sweep["values"]), **doc)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def resolve_seed(flag: int | None, config_seed: int | None = None) -> int:
    if flag is not None:
        return flag
    if config_seed is not None:
        return config_seed
    env = os.environ.get("DROPLET_SIM_SEED")
    return int(env) if env else 0


def params_for(cfg: ExperimentConfig, value, code: str = "r10") -> SystemParams:
    """Parameters at one sweep value.

    ``params.mode == "solve"`` applies the system-size rules (workload target
    and rate, ``K`` from the sweep); ``"fixed"`` takes K, m, n, N, l and rate
    literally. In both modes ``beta`` is ``sigma_K`` times the sweep value
    for a ``beta`` sweep, and ``sigma_K`` itself otherwise.
    """
    p = dict(cfg.params)
    mode = p.pop("mode", "fixed")
    u = p.pop("u", 8)
    rate = p.pop("rate", 1 / 3)
    if cfg.variable == "K":
        p["K"] = int(value)
    if mode == "solve":
        sp = solve_params(p.pop("K"), p.pop("workload", 1e7), rate, u=u, code=code)
    elif mode == "fixed":
        sp = make_params(p.pop("K"), p.pop("m"), p.pop("n"), p.pop("N"), p.pop("l"), rate,
                         u=u, code=code)
    else:
        raise ConfigError(f"unknown params mode {mode!r}")
    if cfg.variable == "beta":
        sp = sp.with_(beta=float(value) * sp.sigma_K)
    if code == "lt":
        sp = sp.with_(lt_c=cfg.lt["c"], lt_delta=cfg.lt["delta"], eps_min=cfg.lt["eps_min"])
    return sp


def make_code(code: str, k: int, lt: dict | None = None):
    if code == "r10":
        return build_raptor(k)
    if code == "lt":
        lt = lt or {}
        return LTCode(k, robust_soliton(RobustSolitonParams(k, lt.get("c", 0.03), lt.get("delta", 0.5))))
    if code == "ideal":
        return IdealCode(k)
    raise ConfigError(f"unknown code {code!r}")


def default_eps_min(code: str, spec) -> float:
    return min_overhead(spec) if code == "r10" else 0.0


def _cache_path(cache, code, k, eps_min, trials, seed) -> Path | None:
    if not cache:
        return None
    path = Path(cache)
    if path.suffix == ".json":
        return path
    return path / f"{code}_k{k}_eps{eps_min:.6f}_t{trials}_s{seed}.json"


def get_profile(cfg: ExperimentConfig, params: SystemParams, seed: int, threads: int = 1):
    """Overhead profile for the code in ``params``, through the JSON cache."""
    code = params.code
    if code == "ideal":
        return ideal_profile(params)
    spec = make_code(code, params.k, {"c": params.lt_c, "delta": params.lt_delta})
    eps_min = params.eps_min if params.eps_min is not None else default_eps_min(code, spec)
    path = _cache_path(cfg.profile_cache, code, params.k, eps_min, cfg.profile_trials, seed)
    if path is not None and path.exists():
        prof = OverheadProfile.load(path)
        if prof.k != params.k or prof.code != code:
            raise ConfigError(f"cached profile {path} is for {prof.code} k={prof.k}, "
                              f"need {code} k={params.k}")
    else:
        prof = estimate_profile(spec, eps_min, cfg.profile_trials, seed, l=params.l,
                                cost=params.cost, ops_trials=cfg.profile_ops_trials,
                                threads=threads)
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            prof.save(path)
    return prof.with_cost(params.l, params.cost)


def _scheme_setup(name: str):
    """(simulation scheme, code) for a configured scheme name."""
    return {
        "proposed-r10": ("proposed", "r10"),
        "proposed-lt": ("proposed", "lt"),
        "ideal": ("ideal", "ideal"),
        "centralized-r10": ("centralized", "r10"),
        "uncoded": ("uncoded", "r10"),
    }[name]


def _simulate(args):
    params, prof, scheme, trials, seed, point, strategy = args
    return run_trials(params, prof, scheme, trials, seed, point, strategy)


def _point_jobs(cfg, seed, threads):
    """Parameters, profiles and simulation jobs per (sweep value, scheme)."""
    names = list(dict.fromkeys(list(cfg.schemes) + ["uncoded"]))
    jobs, meta = [], []
    profiles = {}
    for point, value in enumerate(cfg.values):
        for name in names:
            scheme, code = _scheme_setup(name)
            params = params_for(cfg, value, code)
            prof = None
            if scheme != "uncoded":
                key = (code, params.k, params.l, params.u, params.eps_min)
                if key not in profiles:
                    profiles[key] = get_profile(cfg, params, seed, threads)
                prof = profiles[key]
            # every scheme at a sweep value shares the stream (seed, point, trial)
            jobs.append((params, prof, scheme, cfg.trials, seed, point, cfg.strategy))
            meta.append((value, name, scheme, params, prof))
    return jobs, meta


def _run_jobs(jobs, threads):
    if threads > 1:
        with ProcessPoolExecutor(threads) as pool:
            return list(pool.map(_simulate, jobs))
    return [_simulate(j) for j in jobs]


def _fmt(x) -> str:
    if x is None or x == "":
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row[c]) for c in columns])
    return buf.getvalue()


def _analytic(scheme, params, prof, q):
    if scheme in ("proposed", "ideal"):
        return analytical_delay(params if scheme == "proposed" else params.with_(code="ideal"),
                                prof, q)
    return None


def cmd_sweep(cfg: ExperimentConfig, seed: int, threads: int = 1) -> str:
    jobs, meta = _point_jobs(cfg, seed, threads)
    results = _run_jobs(jobs, threads)
    uncoded = {value: s.mean for (value, name, *_), s in zip(meta, results) if name == "uncoded"}
    rows = []
    for (value, name, scheme, params, prof), s in zip(meta, results):
        est = _analytic(scheme, params, prof, s.q)
        rows.append({
            "sweep_variable": cfg.variable, "value": value, "scheme": name,
            "strategy": cfg.strategy if scheme != "uncoded" else "",
            "q": s.q if s.q is not None else "", "trials": cfg.trials,
            "mean_d_map": float(s.d_map.mean()), "mean_d_reduce": float(s.d_reduce.mean()),
            "mean_d_total": s.mean, "normalized_d_total": s.mean / uncoded[value],
            "stderr_d_total": s.stderr,
            "analytical_d_bar": float(est.d_bar) if est is not None else "",
        })
    rows.sort(key=lambda r: (cfg.values.index(r["value"]), SCHEME_NAMES.index(r["scheme"])))
    return _csv_text(SWEEP_COLUMNS, rows)


def cmd_estimate(cfg: ExperimentConfig, seed: int, threads: int = 1) -> str:
    sub = ExperimentConfig(**{**cfg.__dict__, "schemes": [
        s for s in cfg.schemes if s in ("proposed-r10", "proposed-lt", "ideal")] or ["proposed-r10"]})
    jobs, meta = _point_jobs(sub, seed, threads)
    keep = [i for i, m in enumerate(meta) if m[2] != "uncoded"]
    results = _run_jobs([jobs[i] for i in keep], threads)
    rows = []
    for i, s in zip(keep, results):
        value, name, scheme, params, prof = meta[i]
        est = _analytic(scheme, params, prof, s.q)
        rows.append({
            "sweep_variable": cfg.variable, "value": value, "scheme": name, "q": est.q,
            "analytical_d_bar": est.d_bar, "v_bar_p": est.v_bar_p, "wait_term": est.wait_term,
            "d_reduce": est.d_reduce, "simulated_mean": s.mean, "simulated_stderr": s.stderr,
            "relative_error": (est.d_bar - s.mean) / s.mean,
        })
    rows.sort(key=lambda r: (cfg.values.index(r["value"]), SCHEME_NAMES.index(r["scheme"])))
    return _csv_text(ESTIMATE_COLUMNS, rows)


def cmd_pf_table(k: int, code: str, eps_min: float | None, trials: int, seed: int, *,
                 l: int = 1, u: int = 8, lt: dict | None = None, ops_trials: int | None = None,
                 threads: int = 1) -> str:
    spec = make_code(code, k, lt)
    if eps_min is None:
        eps_min = default_eps_min(code, spec)
    prof = estimate_profile(spec, eps_min, trials, seed, l=l, cost=CostModel.from_u(u),
                            ops_trials=ops_trials, threads=threads)
    return prof.to_json()


def cmd_verify(params: SystemParams, seed: int, corrupt: bool = False) -> tuple[int, list[str]]:
    report = verify_end_to_end(params, np.random.default_rng(np.random.SeedSequence([seed])),
                               corrupt=corrupt)
    return (0 if report.ok else 1), report.lines()


def _write(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8", newline="\n")
    else:
        sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="droplet-sim", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="JSON experiment configuration")
        p.add_argument("--seed", type=int, default=None, help="master seed (else DROPLET_SIM_SEED)")
        p.add_argument("--trials", type=int, default=None)
        p.add_argument("--out", default=None, help="output path (default: stdout)")
        p.add_argument("--threads", type=int, default=1)

    common(sub.add_parser("sweep", help="simulate every scheme over a sweep"))
    common(sub.add_parser("estimate", help="analytical estimate against simulation"))

    pf = sub.add_parser("pf-table", help="estimate an overhead profile")
    common(pf, config=False)
    pf.add_argument("--k", type=int, required=True)
    pf.add_argument("--code", choices=("r10", "lt", "ideal"), default="r10")
    pf.add_argument("--eps-min", type=float, default=None)
    pf.add_argument("--l", type=int, default=1)
    pf.add_argument("--u", type=int, default=8)
    pf.add_argument("--ops-trials", type=int, default=None)
    pf.add_argument("--lt-c", type=float, default=0.03)
    pf.add_argument("--lt-delta", type=float, default=0.5)

    vf = sub.add_parser("verify", help="end-to-end multiplication check")
    common(vf, config=False)
    vf.add_argument("--config", default=None, help="JSON object of parameter overrides")
    for name, default in (("K", 10), ("m", 512), ("n", 8), ("N", 20), ("l", 16), ("u", 8)):
        vf.add_argument(f"--{name}", type=int, default=None, help=f"default {default}")
    vf.add_argument("--rate", type=float, default=None)
    vf.add_argument("--code", choices=("r10", "lt", "ideal"), default=None)
    vf.add_argument("--fault-inject", action="store_true",
                    help="corrupt one received droplet (must make verification fail)")
    return ap


VERIFY_DEFAULTS = {"K": 10, "m": 512, "n": 8, "N": 20, "l": 16, "u": 8, "rate": 1 / 3, "code": "r10"}


def verify_params(args) -> SystemParams:
    p = dict(VERIFY_DEFAULTS)
    if args.config:
        p.update(json.loads(Path(args.config).read_text(encoding="utf-8")))
    for key in VERIFY_DEFAULTS:
        v = getattr(args, key)
        if v is not None:
            p[key] = v
    return make_params(p["K"], p["m"], p["n"], p["N"], p["l"], p["rate"], u=p["u"],
                       code=p["code"], q=1)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except (ConfigError, InfeasibleParams, InfeasibleError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _dispatch(args) -> int:
    if args.command in ("sweep", "estimate"):
        cfg = ExperimentConfig.load(args.config)
        if args.trials is not None:
            cfg.trials = args.trials
        seed = resolve_seed(args.seed, cfg.seed)
        fn = cmd_sweep if args.command == "sweep" else cmd_estimate
        _write(fn(cfg, seed, args.threads), args.out or cfg.output)
        return 0
    seed = resolve_seed(args.seed)
    if args.command == "pf-table":
        text = cmd_pf_table(args.k, args.code, args.eps_min, args.trials or 10_000, seed,
                            l=args.l, u=args.u, lt={"c": args.lt_c, "delta": args.lt_delta},
                            ops_trials=args.ops_trials, threads=args.threads)
        _write(text, args.out)
        return 0
    status, lines = cmd_verify(verify_params(args), seed, corrupt=args.fault_inject)
    _write("\n".join(lines) + "\n", args.out)
    return status


if __name__ == "__main__":
    sys.exit(main())
