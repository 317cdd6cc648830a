"""Command-line pipeline: prepare, price-options, estimate-mc, optimize, validate, report.

Exit codes: 0 success, 1 unexpected error, 2 schema or configuration error,
3 insufficient data, 4 infeasible site, 5 validation failure. The summary
goes to stdout, diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field, fields
from datetime import datetime
from pathlib import Path
from typing import Sequence

import numpy as np

from . import market_data as md
from .binomial_option import TradingSession, bachelier_limit, option_values
from .energy_system import Demands, EnergySystem, InfeasibleDispatch, load_units, marginal_cost
from .multimarket import (MARKET_SUBSETS, ConsistencyError, UnservableSite, evaluate_schedule, optimize_day,
                          parse_markets)
from .opt_kernel import BACKENDS, COARSE_REL_GAP, solve_mip
from .oracles import enumerate_milp, random_milp, random_session
from .pipeline import build_day_inputs, day_starts
from .replication import MAX_EXHAUSTIVE_STEPS, validate_replication

EXIT_OK, EXIT_ERROR, EXIT_SCHEMA, EXIT_DATA, EXIT_INFEASIBLE, EXIT_VALIDATION = 0, 1, 2, 3, 4, 5
SEED_ENV = "FLEXBID_SEED"
SIGMA_RANGE = (0.5, 6.0)


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    forecasts: str | None = None
    spot: str | None = None
    bp_auctions: str | None = None
    demands: str | None = None
    units: str | None = None
    parameters: str = "parameters.json"
    schedule: str = "schedule.json"
    day: str | None = None
    gas_price: float = 25.0
    k: int = 4
    capacity_targets: list = field(default_factory=lambda: list(md.DEFAULT_CAPACITY_TARGETS))
    energy_targets: list = field(default_factory=lambda: list(md.DEFAULT_ENERGY_TARGETS))
    sigma_multiplier: float = 1.0
    bp_max: int = 10
    n_steps: int = 64
    sweep_points: int = 11
    abs_gap: float = 1e-6
    rel_gap: float = 0.0
    time_limit: float | None = None
    seed: int = 0
    markets: str = "DA+ID+BP"
    solver: str = "native"
    jobs: int = 1
    base_dir: str = "."

    def path(self, name: str) -> Path:
        value = getattr(self, name)
        if value is None:
            raise ConfigError(f"config is missing the {name!r} path")
        p = Path(value)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def validate(self) -> None:
        lo, hi = SIGMA_RANGE
        if not lo <= self.sigma_multiplier <= hi:
            raise ConfigError(f"sigma_multiplier {self.sigma_multiplier} outside [{lo}, {hi}]")
        if self.k < 1:
            raise ConfigError("k must be at least 1")
        if self.bp_max < 0:
            raise ConfigError("bp_max must be nonnegative")
        if self.n_steps < 1:
            raise ConfigError("n_steps must be positive")
        if self.jobs < 1:
            raise ConfigError("jobs must be positive")
        if self.solver not in BACKENDS:
            raise ConfigError(f"solver must be one of {BACKENDS}")
        try:
            parse_markets(self.markets)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def solver_options(self) -> dict:
        return {"abs_gap": self.abs_gap, "rel_gap": self.rel_gap, "time_limit": self.time_limit,
                "backend": self.solver}


def load_config(path: str | None, overrides: dict) -> RunConfig:
    """Config file, then ``FLEXBID_SEED``, then command-line flags."""
    data: dict = {}
    base = "."
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path}: {exc}") from None
        base = str(Path(path).resolve().parent)
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    cfg = RunConfig(**{**data, "base_dir": base})
    env_seed = os.environ.get(SEED_ENV)
    if env_seed is not None:
        try:
            cfg.seed = int(env_seed)
        except ValueError:
            raise ConfigError(f"{SEED_ENV}={env_seed!r} is not an integer") from None
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, value)
    cfg.validate()
    return cfg


def _err(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)


# -- subcommands -------------------------------------------------------

def _load_inputs(cfg: RunConfig):
    fc = md.read_forecasts(cfg.path("forecasts"))
    spot = md.read_spot(cfg.path("spot"))
    return fc, spot


def cmd_prepare(cfg: RunConfig) -> int:
    fc, spot = _load_inputs(cfg)
    auctions = md.read_bp_auctions(cfg.path("bp_auctions"))
    params = md.prepare_parameters(fc, spot, auctions, cfg.k, cfg.seed, tuple(cfg.capacity_targets),
                                   tuple(cfg.energy_targets))
    out = cfg.path("parameters")
    params.write(out)
    print(f"wrote {out}: {params.hourly.k} hourly clusters, {params.slices.k} slice clusters")
    for j, (mu, sigma, n) in enumerate(zip(params.intraday.mu, params.intraday.sigma, params.intraday.count)):
        print(f"  cluster {j}: mu={mu:8.3f} sigma={sigma:8.3f} EUR/MWh  (n={n})")
    return EXIT_OK


def _read_params(cfg: RunConfig) -> md.MarketParameters:
    path = cfg.path("parameters")
    if not path.exists():
        raise ConfigError(f"parameters file {path} not found; run 'prepare' first")
    try:
        return md.MarketParameters.read(path)
    except (KeyError, json.JSONDecodeError) as exc:
        raise md.SchemaError(f"parameters file {path} is malformed: {exc}") from None


def _system(cfg: RunConfig) -> EnergySystem:
    try:
        return load_units(cfg.path("units"), cfg.gas_price)
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise md.SchemaError(f"units file {cfg.path('units')} is malformed: {exc}") from None


def _day_start(cfg: RunConfig, forecasts) -> datetime:
    if cfg.day is None:
        days = day_starts(forecasts)
        if not days:
            raise md.InsufficientData("no complete forecast day")
        return days[0]
    try:
        return datetime.fromisoformat(cfg.day)
    except ValueError:
        raise ConfigError(f"day {cfg.day!r} is not an ISO date") from None


def _day_inputs(cfg: RunConfig):
    params = _read_params(cfg)
    fc, spot = _load_inputs(cfg)
    dem = md.read_demands(cfg.path("demands"))
    system = _system(cfg)
    start = _day_start(cfg, fc)
    day = build_day_inputs(params, start, fc, spot, dem, system, cfg.gas_price, cfg.n_steps,
                           cfg.sigma_multiplier, cfg.bp_max, cfg.sweep_points)
    return day, system, start


def cmd_price_options(cfg: RunConfig, session_args: dict | None) -> int:
    if session_args:
        s = TradingSession(**session_args)
        q = option_values(s)
        lim_sell, lim_buy = bachelier_limit(s)
        print(json.dumps({"opt_sell": q.opt_sell, "opt_buy": q.opt_buy, "p_sell": q.p_sell, "p_buy": q.p_buy,
                          "bachelier_sell": lim_sell, "bachelier_buy": lim_buy}, indent=2))
        return EXIT_OK
    day, _, start = _day_inputs(cfg)
    print(f"intraday option values for {start.date()} (sigma x {cfg.sigma_multiplier:g})")
    print(f"{'hour':>4} {'s_ini':>8} {'mu':>7} {'sigma':>7} {'mc':>7} {'opt_sell':>9} {'opt_buy':>8} {'p_sell':>7}")
    for h, hour in enumerate(day.hours):
        s, q = hour.session, hour.quote
        print(f"{h:4d} {s.s_ini:8.2f} {s.mu:7.2f} {s.sigma:7.2f} {s.mc:7.2f} {q.opt_sell:9.3f} "
              f"{q.opt_buy:8.3f} {q.p_sell:7.3f}")
    return EXIT_OK


def cmd_estimate_mc(cfg: RunConfig, heat: float | None, cool: float | None) -> int:
    system = _system(cfg)
    if heat is not None or cool is not None:
        cases = [(None, Demands(0.0, heat or 0.0, cool or 0.0))]
    else:
        dem = md.read_demands(cfg.path("demands"))
        fc = md.read_forecasts(cfg.path("forecasts"))
        start = _day_start(cfg, fc)
        cases = [(t, Demands(0.0, v[1], v[2])) for t, v in sorted(dem.items())
                 if 0 <= (t - start).total_seconds() < 86400]
        if not cases:
            raise md.InsufficientData(f"no demands on {start.date()}")
    print(f"{'hour':>19} {'heat':>6} {'cool':>6} {'mc':>9} {'intercept':>10} {'r2':>7}")
    for t, d in cases:
        fit = marginal_cost(system, d, cfg.sweep_points)
        label = t.isoformat() if t is not None else "-"
        print(f"{label:>19} {d.heat:6.2f} {d.cool:6.2f} {fit.mc:9.3f} {fit.intercept:10.3f} {fit.r2:7.4f}")
    return EXIT_OK


def _schedule_document(schedule, cfg: RunConfig, start: datetime) -> dict:
    doc = schedule.to_dict()
    doc["run"] = {"day": start.date().isoformat(), "sigma_multiplier": cfg.sigma_multiplier,
                  "n_steps": cfg.n_steps, "bp_max": cfg.bp_max, "seed": cfg.seed}
    return doc


def cmd_optimize(cfg: RunConfig, compare: bool, csv_path: str | None, mode: str) -> int:
    day, system, start = _day_inputs(cfg)
    subsets = MARKET_SUBSETS if compare else (cfg.markets,)
    results = {}
    for m in subsets:
        results[m] = optimize_day(day, system, m, mode=mode, jobs=cfg.jobs, **cfg.solver_options())
        evaluate_schedule(results[m], day, system)
    chosen = results.get(cfg.markets) or optimize_day(day, system, cfg.markets, mode=mode, jobs=cfg.jobs,
                                                       **cfg.solver_options())
    out = cfg.path("schedule")
    doc = _schedule_document(chosen, cfg, start)
    out.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    if csv_path:
        chosen.write_csv(csv_path)
    print(f"day {start.date()}  markets {chosen.markets}  expected OPEX {chosen.expected_opex:.2f} EUR")
    print(_format_slices(doc))
    if compare:
        base = results["DA"].expected_opex
        print(f"{'markets':<10} {'expected OPEX':>14} {'vs DA':>9}")
        for m in subsets:
            v = results[m].expected_opex
            rel = (v - base) / abs(base) * 100 if abs(base) > 1e-9 else float("nan")
            print(f"{m:<10} {v:14.2f} {rel:8.1f}%")
    print(f"wrote {out}")
    return EXIT_OK


def _format_slices(doc: dict) -> str:
    lines = [f"{'slice':>5} {'BP+':>4} {'BP-':>4} {'cp+':>7} {'ep+':>7} {'cp-':>7} {'ep-':>7} {'OPEX':>10}"]
    for s in doc["slices"]:
        lines.append(f"{s['slice']:5d} {s['BP_plus']:4d} {s['BP_minus']:4d} {s['cp_plus']:7.2f} {s['ep_plus']:7.2f} "
                     f"{s['cp_minus']:7.2f} {s['ep_minus']:7.2f} {s['expected_opex']:10.2f}")
    return "\n".join(lines)


def _faulty_ratio(side, v_up, v_down, u, d):
    # deliberately wrong hedge: ignores the price spread
    return 0.5 * (v_up - v_down) * (1 if side == "sell" else -1)


def cmd_validate(cfg: RunConfig, n_steps: int, exhaustive: bool, samples: int, sessions: int,
                 milps: int, fault: bool) -> int:
    if exhaustive and n_steps > MAX_EXHAUSTIVE_STEPS:
        raise ConfigError(f"exhaustive replay needs n_steps <= {MAX_EXHAUSTIVE_STEPS}, got {n_steps}")
    mode = "exhaustive" if (exhaustive or n_steps <= MAX_EXHAUSTIVE_STEPS) else "sampled"
    rng = np.random.default_rng(cfg.seed)
    kwargs = {"ratio_rule": _faulty_ratio} if fault else {}
    worst = 0.0
    worst_parity = 0.0
    for _ in range(sessions):
        s = random_session(rng, n_steps=n_steps)
        worst = max(worst, validate_replication(s, mode, samples, cfg.seed, **kwargs))
        q = option_values(s)
        worst_parity = max(worst_parity, abs(q.opt_sell - q.opt_buy - (s.s_ini - s.mc)))
    checks = [("replication", worst <= 1e-9, f"max error {worst:.3e} over {sessions} sessions ({mode})"),
              ("put-call parity", worst_parity <= 1e-9, f"max deviation {worst_parity:.3e}")]
    bad = 0
    for _ in range(milps):
        model = random_milp(rng)
        sol = solve_mip(model)
        status, obj = enumerate_milp(model)
        if status != sol.status or (status == "optimal" and abs(obj - sol.objective) > 1e-6):
            bad += 1
    checks.append(("milp oracle", bad == 0, f"{milps - bad}/{milps} random MILPs match enumeration"))
    ok = True
    for name, passed, detail in checks:
        print(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
        ok &= passed
    return EXIT_OK if ok else EXIT_VALIDATION


def cmd_report(cfg: RunConfig, schedule_path: str | None, evaluate: bool) -> int:
    path = Path(schedule_path) if schedule_path else cfg.path("schedule")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
        slices = doc["slices"]
    except FileNotFoundError:
        raise ConfigError(f"schedule file {path} not found") from None
    except (KeyError, json.JSONDecodeError) as exc:
        raise md.SchemaError(f"schedule file {path} is malformed: {exc}") from None
    run = doc.get("run", {})
    print(f"schedule {path}  day {run.get('day', '?')}  markets {doc.get('markets')}")
    print(f"expected OPEX {doc['expected_opex']:.2f} EUR")
    for k, v in sorted(doc.get("breakdown", {}).items()):
        print(f"  {k:<9} {v:12.2f}")
    print(_format_slices(doc))
    hours = doc.get("hours", [])
    print(f"{'hour':>4} {'branch':>6} {'DA_sell':>8} {'DA_buy':>8} {'ID_sell':>8} {'ID_buy':>8}")
    for h in hours:
        print(f"{h['hour']:4d} {h['a_plus']}{h['a_minus']:>5} {h['DA_sell']:8.3f} {h['DA_buy']:8.3f} "
              f"{h['ID_sell']:8.3f} {h['ID_buy']:8.3f}")
    if evaluate:
        day, system, _ = _day_inputs(cfg)
        schedule = optimize_day(day, system, doc.get("markets", cfg.markets), jobs=cfg.jobs,
                                **cfg.solver_options())
        report = evaluate_schedule(schedule, day, system)
        same = abs(report.expected_opex - doc["expected_opex"]) <= 1e-6 * max(1.0, abs(doc["expected_opex"]))
        print(f"re-evaluated expected OPEX {report.expected_opex:.6f} EUR "
              f"({'matches' if same else 'differs from'} file)")
        if not same:
            return EXIT_VALIDATION
    return EXIT_OK


# -- parser ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="flexbid", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="run configuration (JSON)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--day", help="ISO date of the day to optimise")
        sp.add_argument("--gas-price", type=float, dest="gas_price")
        sp.add_argument("--sigma-multiplier", type=float, dest="sigma_multiplier")
        sp.add_argument("--n-steps", type=int, dest="n_steps")
        return sp

    sp = common(sub.add_parser("prepare", help="fit market parameters from the CSV inputs"))
    sp.add_argument("--k", type=int)
    sp.add_argument("--parameters", help="output parameters file")

    sp = common(sub.add_parser("price-options", help="intraday option values"))
    for name in ("s-ini", "mu", "sigma", "mc"):
        sp.add_argument(f"--{name}", type=float, dest=f"opt_{name.replace('-', '_')}")

    sp = common(sub.add_parser("estimate-mc", help="marginal electricity cost by dispatch sweep"))
    sp.add_argument("--heat", type=float)
    sp.add_argument("--cool", type=float)
    sp.add_argument("--sweep-points", type=int, dest="sweep_points")

    sp = common(sub.add_parser("optimize", help="optimal coordinated bids for one day"))
    sp.add_argument("--markets", choices=MARKET_SUBSETS)
    sp.add_argument("--compare-subsets", action="store_true")
    sp.add_argument("--bp-max", type=int, dest="bp_max")
    sp.add_argument("--jobs", type=int)
    sp.add_argument("--solver", choices=BACKENDS)
    sp.add_argument("--mode", choices=("enumerate", "bigm"), default="enumerate")
    sp.add_argument("--time-limit", type=float, dest="time_limit")
    sp.add_argument("--coarse-gap", action="store_true", help=f"relative MIP gap {COARSE_REL_GAP:g}")
    sp.add_argument("--output", dest="schedule", help="schedule.json path")
    sp.add_argument("--csv", help="also write the schedule as CSV")

    sp = common(sub.add_parser("validate", help="replication and solver oracle checks"))
    sp.add_argument("--exhaustive", action="store_true")
    sp.add_argument("--samples", type=int, default=1000)
    sp.add_argument("--sessions", type=int, default=20)
    sp.add_argument("--milps", type=int, default=30)
    sp.add_argument("--inject-hedge-fault", action="store_true", help=argparse.SUPPRESS)

    sp = common(sub.add_parser("report", help="summarise a schedule.json"))
    sp.add_argument("--schedule", dest="schedule_file")
    sp.add_argument("--evaluate", action="store_true", help="re-solve and re-evaluate against the file")
    return p


_OVERRIDES = ("seed", "day", "gas_price", "sigma_multiplier", "n_steps", "k", "parameters", "markets", "bp_max",
              "jobs", "solver", "time_limit", "schedule", "sweep_points")


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {k: getattr(args, k, None) for k in _OVERRIDES}
    if getattr(args, "coarse_gap", False):
        overrides["rel_gap"] = COARSE_REL_GAP
    try:
        cfg = load_config(args.config, overrides)
        if args.command == "prepare":
            return cmd_prepare(cfg)
        if args.command == "price-options":
            vals = {k: getattr(args, f"opt_{k}") for k in ("s_ini", "mu", "sigma", "mc")}
            session = None
            if any(v is not None for v in vals.values()):
                if any(v is None for v in vals.values()):
                    raise ConfigError("direct pricing needs --s-ini, --mu, --sigma and --mc")
                session = {**vals, "n_steps": cfg.n_steps}
            return cmd_price_options(cfg, session)
        if args.command == "estimate-mc":
            return cmd_estimate_mc(cfg, args.heat, args.cool)
        if args.command == "optimize":
            return cmd_optimize(cfg, args.compare_subsets, args.csv, args.mode)
        if args.command == "validate":
            n = args.n_steps if args.n_steps is not None else 12
            return cmd_validate(cfg, n, args.exhaustive, args.samples, args.sessions, args.milps,
                                args.inject_hedge_fault)
        if args.command == "report":
            return cmd_report(cfg, args.schedule_file, args.evaluate)
    except (ConfigError, md.SchemaError) as exc:
        _err(str(exc))
        return EXIT_SCHEMA
    except md.InsufficientData as exc:
        _err(str(exc))
        return EXIT_DATA
    except (InfeasibleDispatch, UnservableSite) as exc:
        _err(str(exc))
        return EXIT_INFEASIBLE
    except ConsistencyError as exc:
        _err(str(exc))
        return EXIT_VALIDATION
    except ValueError as exc:
        # invalid sessions and similar input-derived violations
        _err(str(exc))
        return EXIT_DATA
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
