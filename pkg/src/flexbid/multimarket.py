"""Coordinated bidding across balancing power, day-ahead and intraday markets.

Each hour branches into 16 scenarios: acceptance of the positive and
negative capacity bids, the intraday outcome (sell or buy) and the request
stage. Day-ahead and intraday volumes are chosen once per acceptance branch
and hour (non-anticipativity by variable sharing); balancing power is one
integer tender per 4-hour slice. Slices are independent, so a day is solved
slice by slice, with an explicit minimum over the price combinations.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .binomial_option import OptionQuote, TradingSession, option_values
from .energy_system import (ELECTRICITY, Demands, DispatchResult, EnergySystem, UnitBlock, add_thermal_balances,
                            add_units, net_electricity_range)
from .market_data import CombinationSet, PriceCombination
from .opt_kernel import BINARY, EQ, INTEGER, LE, Model, solve_mip

__all__ = [
    "ACCEPTANCE_BRANCHES", "SLICE_HOURS", "HOURS_PER_DAY", "MARKET_SUBSETS", "NULL_COMBINATION",
    "Scenario", "HourInputs", "DayInputs", "SliceProblem", "SliceResult", "BidSchedule",
    "EvaluationReport", "ConsistencyError", "UnservableSite",
    "build_scenarios", "build_subproblem", "optimize_slice", "optimize_day", "evaluate_schedule",
    "parse_markets",
]

SLICE_HOURS = 4
HOURS_PER_DAY = 24
ACCEPTANCE_BRANCHES = ((0, 0), (0, 1), (1, 0), (1, 1))
MARKET_SUBSETS = ("DA", "DA+ID", "DA+BP", "DA+ID+BP")
NULL_COMBINATION = PriceCombination(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
_ROUND = 9


class ConsistencyError(RuntimeError):
    """Recomputed expected cost disagrees with the solver objective."""


class UnservableSite(RuntimeError):
    """No subproblem of a slice is feasible."""


def parse_markets(markets: str | Sequence[str]) -> frozenset[str]:
    """``"DA+ID+BP"`` (any order, also ``"DA,ID"``) to a set; day-ahead is mandatory."""
    parts = markets.replace(",", "+").split("+") if isinstance(markets, str) else list(markets)
    out = frozenset(p.strip().upper() for p in parts if p.strip())
    if not out <= {"DA", "ID", "BP"} or "DA" not in out:
        raise ValueError(f"market subset {markets!r} must be one of {MARKET_SUBSETS}")
    return out


def _subset_name(markets: frozenset[str]) -> str:
    return "+".join(m for m in ("DA", "ID", "BP") if m in markets)


# -- scenarios ---------------------------------------------------------

@dataclass(frozen=True)
class Scenario:
    a_plus: int
    a_minus: int
    m: str
    r: str
    probability: float

    @property
    def branch(self) -> tuple[int, int]:
        return self.a_plus, self.a_minus

    @property
    def s_cp_plus(self) -> int:
        return self.a_plus

    @property
    def s_cp_minus(self) -> int:
        return self.a_minus

    @property
    def s_sell(self) -> int:
        return int(self.m == "sell")

    @property
    def s_buy(self) -> int:
        return int(self.m == "buy")

    @property
    def s_ep_plus(self) -> int:
        return self.a_plus * int(self.r == "R_pos")

    @property
    def s_ep_minus(self) -> int:
        return self.a_minus * int(self.r == "R_neg")


def _check_prob(name, v):
    if not 0.0 <= v <= 1.0 or math.isnan(v):
        raise ValueError(f"{name}={v} outside [0, 1]")


def _request_split(a_plus, a_minus, q_plus, q_minus):
    if a_plus and not a_minus:
        return q_plus, 1.0 - q_plus
    if a_minus and not a_plus:
        return 1.0 - q_minus, q_minus
    if a_plus and a_minus:
        total = q_plus + q_minus
        if total <= 0:
            return None
        return q_plus / total, q_minus / total
    return 0.5, 0.5


def build_scenarios(combination: PriceCombination, quote: OptionQuote) -> tuple[Scenario, ...]:
    """The 16 scenarios of one hour, ordered by ``a+``, ``a-``, ``m``, ``r``.

    Acceptance of the two capacity bids is independent. If both bids are
    accepted the request branches split in the ratio ``q+ : q-``; with one
    accepted bid the request branch has probability ``q`` and the other is
    request-free; with none both branches are request-free halves.
    """
    c = combination
    for name in ("acc_prob_plus", "acc_prob_minus", "req_prob_plus", "req_prob_minus"):
        _check_prob(name, getattr(c, name))
    _check_prob("p_sell", quote.p_sell)
    _check_prob("p_buy", quote.p_buy)
    out = []
    for a_plus, a_minus in ACCEPTANCE_BRANCHES:
        p_acc = (c.acc_prob_plus if a_plus else 1.0 - c.acc_prob_plus) * \
                (c.acc_prob_minus if a_minus else 1.0 - c.acc_prob_minus)
        split = _request_split(a_plus, a_minus, c.req_prob_plus, c.req_prob_minus)
        if split is None:
            if p_acc > 0:
                raise ValueError("both bids can be accepted but both request probabilities are zero")
            split = (0.5, 0.5)
        for m, p_id in (("sell", quote.p_sell), ("buy", quote.p_buy)):
            for r, p_req in zip(("R_pos", "R_neg"), split):
                out.append(Scenario(a_plus, a_minus, m, r, p_acc * p_id * p_req))
    return tuple(out)


# -- inputs ------------------------------------------------------------

@dataclass(frozen=True)
class HourInputs:
    """Market and site data of one delivery hour.

    ``quote`` defaults to the binomial option values of ``session``; pass
    it explicitly to override (for example with :meth:`OptionQuote.zero`).
    """

    da_price: float
    gas_price: float
    mc: float
    demands: Demands
    session: TradingSession | None = None
    quote: OptionQuote | None = None

    def __post_init__(self):
        if self.quote is None:
            if self.session is None:
                raise ValueError("hour needs a trading session or an explicit option quote")
            object.__setattr__(self, "quote", option_values(self.session))


@dataclass(frozen=True)
class DayInputs:
    hours: tuple[HourInputs, ...]
    combinations: tuple[CombinationSet, ...]
    bp_max: int = 10

    def __post_init__(self):
        if not self.hours or len(self.hours) % SLICE_HOURS:
            raise ValueError(f"{len(self.hours)} hours do not form whole {SLICE_HOURS}-hour slices")
        if len(self.combinations) != self.n_slices:
            raise ValueError(f"{len(self.combinations)} combination sets for {self.n_slices} slices")
        if any(len(cs) == 0 for cs in self.combinations):
            raise ValueError("every slice needs at least one price combination")
        if self.bp_max < 0 or int(self.bp_max) != self.bp_max:
            raise ValueError("bp_max must be a nonnegative integer")

    @property
    def n_slices(self) -> int:
        return len(self.hours) // SLICE_HOURS

    def slice_hours(self, s: int) -> range:
        if not 0 <= s < self.n_slices:
            raise IndexError(f"slice {s} outside 0..{self.n_slices - 1}")
        return range(s * SLICE_HOURS, (s + 1) * SLICE_HOURS)


# -- subproblem --------------------------------------------------------

@dataclass
class SliceProblem:
    """One slice's MILP with handles to every decision variable.

    Constraints do not depend on the price combination; :meth:`set_combination`
    swaps the objective.
    """

    model: Model
    slice_index: int
    hours: tuple[int, ...]
    markets: frozenset[str]
    bp: dict[str, int]
    da_sell: dict[tuple[int, tuple[int, int]], int]
    da_buy: dict[tuple[int, tuple[int, int]], int]
    da_mode: dict[tuple[int, tuple[int, int]], int]
    id_sell: dict[tuple[int, tuple[int, int]], int]
    id_buy: dict[tuple[int, tuple[int, int]], int]
    blocks: dict[tuple[int, int], UnitBlock]
    branches: tuple[tuple[int, int], ...]
    flags: tuple[Scenario, ...]
    day: DayInputs = field(repr=False)
    combination: PriceCombination | None = None

    def scenario_probabilities(self, combination: PriceCombination) -> dict[int, tuple[Scenario, ...]]:
        return {h: build_scenarios(combination, self.day.hours[h].quote) for h in self.hours}

    def objective_terms(self, combination: PriceCombination) -> dict[str, dict[int, float]]:
        """Expected cost split into gas, BP, DA and ID parts (revenues negative)."""
        parts = {"gas": {}, "bp": {}, "da": {}, "id": {}}

        def add(part, var, coef):
            if coef:
                parts[part][var] = parts[part].get(var, 0.0) + coef

        c = combination
        for h, scenarios in self.scenario_probabilities(c).items():
            hour = self.day.hours[h]
            q = hour.quote
            for s, sc in enumerate(scenarios):
                if sc.branch not in self.branches:
                    continue
                pi = sc.probability
                if pi == 0.0:
                    continue
                for v, g in self.blocks[(h, s)].gas_terms().items():
                    add("gas", v, pi * hour.gas_price * g)
                key = (h, sc.branch)
                add("da", self.da_sell[key], -pi * hour.da_price)
                add("da", self.da_buy[key], pi * hour.da_price)
                add("id", self.id_sell[key], -pi * (q.opt_sell + sc.s_sell * hour.mc))
                add("id", self.id_buy[key], -pi * (q.opt_buy - sc.s_buy * hour.mc))
                add("bp", self.bp["plus"], -pi * (sc.s_cp_plus * c.cp_plus + sc.s_ep_plus * c.ep_plus))
                add("bp", self.bp["minus"], -pi * (sc.s_cp_minus * c.cp_minus + sc.s_ep_minus * c.ep_minus))
        return parts

    def set_combination(self, combination: PriceCombination) -> None:
        total: dict[int, float] = {}
        for terms in self.objective_terms(combination).values():
            for v, coef in terms.items():
                total[v] = total.get(v, 0.0) + coef
        self.model.set_objective(total)
        self.combination = combination


def _resolve_combinations(day: DayInputs, slice_index: int, markets: frozenset[str]):
    if "BP" not in markets:
        return (NULL_COMBINATION,)
    return tuple(day.combinations[slice_index])


def _electric_bounds(system: EnergySystem, demands: Demands, cache: dict):
    key = (demands.heat, demands.cool)
    if key not in cache:
        cache[key] = net_electricity_range(system, Demands(0.0, demands.heat, demands.cool))
    return cache[key]


def build_subproblem(slice_index: int, combination: PriceCombination | None, day: DayInputs,
                     system: EnergySystem, markets: str | Sequence[str] = "DA+ID+BP",
                     combinations: Sequence[PriceCombination] | None = None) -> SliceProblem:
    """MILP of one slice for ``combination`` (objective) under a market subset.

    ``combinations`` lists every combination that will later be swapped in;
    acceptance branches that have zero probability under all of them are
    left out and the corresponding tender is fixed to zero.
    """
    markets = parse_markets(markets)
    hours = tuple(day.slice_hours(slice_index))
    combos = list(combinations) if combinations is not None else []
    if combination is not None:
        combos.append(combination)
    if not combos:
        combos = list(_resolve_combinations(day, slice_index, markets))
    if "BP" not in markets:
        combos = [NULL_COMBINATION]
    any_plus = any(c.acc_prob_plus > 0 for c in combos)
    any_minus = any(c.acc_prob_minus > 0 for c in combos)
    branches = tuple(b for b in ACCEPTANCE_BRANCHES if (any_plus or not b[0]) and (any_minus or not b[1]))
    flags = build_scenarios(NULL_COMBINATION, OptionQuote.zero())

    model = Model(f"slice{slice_index}")
    bp_ub = float(day.bp_max) if "BP" in markets else 0.0
    bp = {"plus": model.add_var("BP+", 0.0, bp_ub if any_plus else 0.0, INTEGER),
          "minus": model.add_var("BP-", 0.0, bp_ub if any_minus else 0.0, INTEGER)}
    cache: dict = {}
    da_sell, da_buy, da_mode, id_sell, id_buy, blocks = {}, {}, {}, {}, {}, {}
    for h in hours:
        hour = day.hours[h]
        d = hour.demands
        lo, hi = _electric_bounds(system, d, cache)
        width = max(hi - lo, 0.0)
        big_m = abs(hi - d.el) + abs(d.el - lo) + width + day.bp_max
        id_ub = width if "ID" in markets else 0.0
        # a worthless option has nothing to trade; keeps volumes from drifting at zero net value
        sell_ub = id_ub if hour.quote.opt_sell > 0 else 0.0
        buy_ub = id_ub if hour.quote.opt_buy > 0 else 0.0
        for b in branches:
            tag = f"t{h}a{b[0]}{b[1]}"
            key = (h, b)
            da_sell[key] = model.add_var(f"DAsell[{tag}]", 0.0, big_m)
            da_buy[key] = model.add_var(f"DAbuy[{tag}]", 0.0, big_m)
            da_mode[key] = model.add_var(f"lamDA[{tag}]", vtype=BINARY)
            model.add_constr({da_sell[key]: 1.0, da_mode[key]: -big_m}, LE, 0.0, f"DAsellM[{tag}]")
            model.add_constr({da_buy[key]: 1.0, da_mode[key]: big_m}, LE, big_m, f"DAbuyM[{tag}]")
            id_sell[key] = model.add_var(f"IDsell[{tag}]", 0.0, sell_ub)
            id_buy[key] = model.add_var(f"IDbuy[{tag}]", 0.0, buy_ub)
        for s, sc in enumerate(flags):
            if sc.branch not in branches:
                continue
            tag = f"t{h}w{s}:"
            block = add_units(model, system, tag)
            blocks[(h, s)] = block
            key = (h, sc.branch)
            terms = block.net_terms(ELECTRICITY)
            extra = {da_sell[key]: -1.0, da_buy[key]: 1.0,
                     id_sell[key]: -float(sc.s_sell), id_buy[key]: float(sc.s_buy),
                     bp["plus"]: -float(sc.s_ep_plus), bp["minus"]: float(sc.s_ep_minus)}
            for v, coef in extra.items():
                if coef:
                    terms[v] = terms.get(v, 0.0) + coef
            model.add_constr(terms, EQ, d.el, f"{tag}bal[electricity]")
            add_thermal_balances(model, block, d, tag)
    problem = SliceProblem(model, slice_index, hours, markets, bp, da_sell, da_buy, da_mode, id_sell,
                           id_buy, blocks, branches, flags, day)
    problem.set_combination(combination if combination is not None else combos[0])
    return problem


# -- results -----------------------------------------------------------

@dataclass(frozen=True)
class SliceResult:
    slice_index: int
    combination_index: int
    combination: PriceCombination
    bp_plus: int
    bp_minus: int
    expected_opex: float
    breakdown: dict[str, float]
    volumes: dict[tuple[int, tuple[int, int]], dict[str, float]]
    dispatch: dict[tuple[int, int], DispatchResult]
    candidates: tuple[float, ...] = ()


def _clean(v: float) -> float:
    v = round(float(v), _ROUND)
    return 0.0 if v == 0 else v


def _extract(problem: SliceProblem, x, index: int, combination, candidates=()) -> SliceResult:
    parts = problem.objective_terms(combination)
    breakdown = {
        "gas_cost": float(sum(c * x[v] for v, c in parts["gas"].items())),
        "R_BP": -float(sum(c * x[v] for v, c in parts["bp"].items())),
        "R_DA": -float(sum(c * x[v] for v, c in parts["da"].items())),
        "R_ID": -float(sum(c * x[v] for v, c in parts["id"].items())),
    }
    breakdown = {k: v + 0.0 for k, v in breakdown.items()}
    opex = breakdown["gas_cost"] - breakdown["R_BP"] - breakdown["R_DA"] - breakdown["R_ID"]
    volumes = {}
    for key in problem.da_sell:
        volumes[key] = {"DA_sell": float(x[problem.da_sell[key]]), "DA_buy": float(x[problem.da_buy[key]]),
                        "ID_sell": float(x[problem.id_sell[key]]), "ID_buy": float(x[problem.id_buy[key]])}
    dispatch = {}
    for key, block in problem.blocks.items():
        res = block.read(x)
        gas_price = problem.day.hours[key[0]].gas_price
        dispatch[key] = DispatchResult(res.on, res.flows, res.gas, res.gas * gas_price)
    return SliceResult(problem.slice_index, index, combination, int(round(x[problem.bp["plus"]])),
                       int(round(x[problem.bp["minus"]])), float(opex), breakdown, volumes, dispatch,
                       tuple(candidates))


def optimize_slice(slice_index: int, day: DayInputs, system: EnergySystem,
                   markets: str | Sequence[str] = "DA+ID+BP", mode: str = "enumerate",
                   **solver_options) -> SliceResult:
    """Best price combination and tender of one slice.

    ``mode="enumerate"`` solves one MILP per combination and keeps the
    minimum, earliest combination on ties; each solve is warm-started from
    the previous one and cut off at the incumbent cost. ``mode="bigm"``
    solves a single MILP with one selection binary per combination.
    """
    markets = parse_markets(markets)
    combos = _resolve_combinations(day, slice_index, markets)
    problem = build_subproblem(slice_index, combos[0], day, system, markets, combos)
    if mode == "bigm":
        return _optimize_bigm(problem, combos, **solver_options)
    if mode != "enumerate":
        raise ValueError("mode must be 'enumerate' or 'bigm'")
    best_val, best_idx, best_x = math.inf, -1, None
    candidates = []
    basis, start = None, None
    for i, c in enumerate(combos):
        problem.set_combination(c)
        tol = 1e-9 * max(1.0, abs(best_val)) if math.isfinite(best_val) else 0.0
        cutoff = best_val - tol if math.isfinite(best_val) else None
        sol = solve_mip(problem.model, warm_start=basis, start=start, cutoff=cutoff, **solver_options)
        if sol.status in ("infeasible", "unbounded"):
            candidates.append(math.nan)
            continue
        if not sol.has_solution:
            candidates.append(sol.bound)
            continue
        candidates.append(sol.objective)
        basis = sol.basis or basis
        start = sol.x
        if sol.objective < best_val - tol:
            best_val, best_idx, best_x = sol.objective, i, sol.x
    if best_x is None:
        raise UnservableSite(f"slice {slice_index}: no feasible tender; site demand cannot be served")
    return _extract(problem, best_x, best_idx, combos[best_idx], candidates)


def _optimize_bigm(problem: SliceProblem, combos, **solver_options) -> SliceResult:
    model = problem.model
    per_combo = []
    bound = 0.0
    lbs = np.array([model.bounds(j)[0] for j in range(model.num_vars)])
    ubs = np.array([model.bounds(j)[1] for j in range(model.num_vars)])
    mag = np.maximum(np.abs(lbs), np.abs(ubs))
    for c in combos:
        problem.set_combination(c)
        terms = model.objective
        per_combo.append(terms)
        bound = max(bound, sum(abs(coef) * mag[v] for v, coef in terms.items()))
    big_m = 2.0 * bound + 1.0
    opex = model.add_var("OPEXexp", -big_m, big_m)
    select = [model.add_var(f"lamBP[{i}]", vtype=BINARY) for i in range(len(combos))]
    model.add_constr({v: 1.0 for v in select}, EQ, 1.0, "pick")
    for i, terms in enumerate(per_combo):
        row = {v: -coef for v, coef in terms.items()}
        row[opex] = 1.0
        row[select[i]] = -big_m
        model.add_constr(row, ">=", -big_m, f"bigM[{i}]")
    model.set_objective({opex: 1.0})
    sol = solve_mip(model, **solver_options)
    if not sol.has_solution:
        raise UnservableSite(f"slice {problem.slice_index}: no feasible tender; site demand cannot be served")
    idx = int(np.argmax([sol.x[v] for v in select]))
    return _extract(problem, sol.x, idx, combos[idx])


# -- day ---------------------------------------------------------------

@dataclass(frozen=True)
class BidSchedule:
    slices: tuple[SliceResult, ...]
    markets: str
    expected_opex: float
    breakdown: dict[str, float]

    def to_dict(self) -> dict:
        slices, hours = [], []
        for r in self.slices:
            slices.append({
                "slice": r.slice_index, "combination_index": r.combination_index,
                "cp_plus": r.combination.cp_plus, "ep_plus": r.combination.ep_plus,
                "cp_minus": r.combination.cp_minus, "ep_minus": r.combination.ep_minus,
                "acc_prob_plus": r.combination.acc_prob_plus, "acc_prob_minus": r.combination.acc_prob_minus,
                "req_prob_plus": r.combination.req_prob_plus, "req_prob_minus": r.combination.req_prob_minus,
                "BP_plus": r.bp_plus, "BP_minus": r.bp_minus,
                "expected_opex": _clean(r.expected_opex),
                "breakdown": {k: _clean(v) for k, v in r.breakdown.items()},
            })
            for (h, b), vols in sorted(r.volumes.items()):
                hours.append({"hour": h, "a_plus": b[0], "a_minus": b[1],
                              **{k: _clean(v) for k, v in vols.items()}})
        return {"markets": self.markets, "expected_opex": _clean(self.expected_opex),
                "breakdown": {k: _clean(v) for k, v in self.breakdown.items()},
                "slices": slices, "hours": hours}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    def to_csv_rows(self) -> list[dict]:
        """One row per hour and acceptance branch, with the slice tender repeated."""
        d = self.to_dict()
        by_slice = {s["slice"]: s for s in d["slices"]}
        rows = []
        for h in d["hours"]:
            s = by_slice[h["hour"] // SLICE_HOURS]
            rows.append({"hour": h["hour"], "slice": s["slice"], "a_plus": h["a_plus"], "a_minus": h["a_minus"],
                         "BP_plus": s["BP_plus"], "BP_minus": s["BP_minus"], "cp_plus": s["cp_plus"],
                         "ep_plus": s["ep_plus"], "cp_minus": s["cp_minus"], "ep_minus": s["ep_minus"],
                         "DA_sell": h["DA_sell"], "DA_buy": h["DA_buy"],
                         "ID_sell": h["ID_sell"], "ID_buy": h["ID_buy"]})
        return rows

    def write_csv(self, path) -> None:
        import csv
        rows = self.to_csv_rows()
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()) if rows else ["hour"])
            writer.writeheader()
            writer.writerows(rows)


def _slice_job(args):
    s, day, system, markets, mode, options = args
    return optimize_slice(s, day, system, markets, mode, **options)


def optimize_day(day: DayInputs, system: EnergySystem, markets: str | Sequence[str] = "DA+ID+BP",
                 mode: str = "enumerate", jobs: int = 1, **solver_options) -> BidSchedule:
    """Solve all six slices of a day independently and collect the schedule."""
    if len(day.hours) != HOURS_PER_DAY:
        raise ValueError(f"a day has {HOURS_PER_DAY} hours, got {len(day.hours)}")
    markets = parse_markets(markets)
    args = [(s, day, system, markets, mode, solver_options) for s in range(day.n_slices)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_slice_job, args))
    else:
        results = [_slice_job(a) for a in args]
    breakdown = {k: sum(r.breakdown[k] for r in results) for k in ("gas_cost", "R_BP", "R_DA", "R_ID")}
    return BidSchedule(tuple(results), _subset_name(markets), sum(r.expected_opex for r in results), breakdown)


# -- independent evaluation -------------------------------------------

@dataclass(frozen=True)
class EvaluationReport:
    expected_opex: float
    breakdown: dict[str, float]
    solver_opex: float
    violations: tuple[str, ...]

    @property
    def feasible(self) -> bool:
        return not self.violations

    @property
    def matches_solver(self) -> bool:
        return abs(self.expected_opex - self.solver_opex) <= 1e-6 * max(1.0, abs(self.solver_opex))


def _slices_of(schedule):
    return schedule.slices if isinstance(schedule, BidSchedule) else (schedule,)


def evaluate_schedule(schedule: BidSchedule | SliceResult, day: DayInputs,
                      system: EnergySystem | None = None, tol: float = 1e-6) -> EvaluationReport:
    """Recompute the probability-weighted cost of a schedule without the solver.

    Checks the electricity balance of every scenario, the tender cap, the
    day-ahead exclusivity and, when ``system`` is given, unit capacities.
    Raises :class:`ConsistencyError` if a feasible schedule's recomputed cost
    differs from the one reported by the optimizer.
    """
    violations = []
    totals = {"gas_cost": 0.0, "R_BP": 0.0, "R_DA": 0.0, "R_ID": 0.0}
    solver = 0.0
    units = {u.id: u for u in system.units} if system is not None else {}
    for r in _slices_of(schedule):
        solver += r.expected_opex
        c = r.combination
        for name, v in (("BP+", r.bp_plus), ("BP-", r.bp_minus)):
            if not 0 <= v <= day.bp_max:
                violations.append(f"slice {r.slice_index}: {name}={v} outside [0, {day.bp_max}]")
        for h in day.slice_hours(r.slice_index):
            hour = day.hours[h]
            q = hour.quote
            for s, sc in enumerate(build_scenarios(c, q)):
                key = (h, sc.branch)
                if key not in r.volumes:
                    if sc.probability > 0:
                        violations.append(f"hour {h}: no volumes for branch {sc.branch}")
                    continue
                vol = r.volumes[key]
                disp = r.dispatch[(h, s)]
                if vol["DA_sell"] > tol and vol["DA_buy"] > tol:
                    violations.append(f"hour {h} branch {sc.branch}: simultaneous DA sell and buy")
                need = (hour.demands.el + vol["DA_sell"] - vol["DA_buy"] + sc.s_sell * vol["ID_sell"]
                        - sc.s_buy * vol["ID_buy"] + sc.s_ep_plus * r.bp_plus - sc.s_ep_minus * r.bp_minus)
                net = disp.net(ELECTRICITY)
                if abs(net - need) > tol * max(1.0, abs(need)):
                    violations.append(f"hour {h} scenario {s}: electricity balance {net:g} != {need:g}")
                for product, demand in (("heat", hour.demands.heat), ("cooling", hour.demands.cool)):
                    if disp.net(product) < demand - tol * max(1.0, demand):
                        violations.append(f"hour {h} scenario {s}: {product} demand not met")
                for uid, flows in disp.flows.items():
                    u = units.get(uid)
                    if u is not None and flows.get(u.primary, 0.0) > u.capacity * (1 + tol) + tol:
                        violations.append(f"hour {h} scenario {s}: unit {uid} above capacity")
                pi = sc.probability
                totals["gas_cost"] += pi * disp.gas * hour.gas_price
                totals["R_DA"] += pi * hour.da_price * (vol["DA_sell"] - vol["DA_buy"])
                totals["R_ID"] += pi * (vol["ID_sell"] * (q.opt_sell + sc.s_sell * hour.mc)
                                        + vol["ID_buy"] * (q.opt_buy - sc.s_buy * hour.mc))
                totals["R_BP"] += pi * (r.bp_plus * (sc.s_cp_plus * c.cp_plus + sc.s_ep_plus * c.ep_plus)
                                        + r.bp_minus * (sc.s_cp_minus * c.cp_minus + sc.s_ep_minus * c.ep_minus))
    opex = totals["gas_cost"] - totals["R_BP"] - totals["R_DA"] - totals["R_ID"]
    report = EvaluationReport(opex, totals, solver, tuple(violations))
    if report.feasible and not report.matches_solver:
        raise ConsistencyError(f"recomputed expected cost {opex:.9g} differs from solver value {solver:.9g}")
    return report
