"""Multi-energy site model: units, product balances, dispatch and marginal cost.

Each unit has one primary output (electricity, heat or cooling) with a
capacity, an on/off state with minimum part load, optional coupled outputs
at a fixed ratio to the primary output (CHP heat), and affine input curves
``input = alpha * output + beta * on``.

Electricity is signed: generation positive, consumption negative. Heat and
cooling balances are ``supply >= demand`` (surplus is dissipated), the
electricity balance is an equality.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .opt_kernel import BINARY, EQ, GE, Model, solve_mip

__all__ = [
    "ELECTRICITY", "HEAT", "COOLING", "GAS", "PRODUCTS", "KINDS",
    "Conversion", "UnitSpec", "EnergySystem", "Demands", "DispatchResult",
    "MarginalCostFit", "InfeasibleDispatch", "UnitBlock",
    "add_units", "dispatch", "marginal_cost", "flex_capacity", "net_electricity_range",
    "load_units", "save_units", "reference_site",
]

ELECTRICITY, HEAT, COOLING, GAS = "electricity", "heat", "cooling", "gas"
PRODUCTS = (ELECTRICITY, HEAT, COOLING, GAS)

# kind -> (primary output, required input)
KINDS = {
    "boiler": (HEAT, GAS),
    "electrode_boiler": (HEAT, ELECTRICITY),
    "chp": (ELECTRICITY, GAS),
    "compression_chiller": (COOLING, ELECTRICITY),
    "absorption_chiller": (COOLING, HEAT),
}


class InfeasibleDispatch(ValueError):
    """Demands cannot be met; ``products`` names the balances that fail."""

    def __init__(self, message, products=()):
        super().__init__(message)
        self.products = tuple(products)


@dataclass(frozen=True)
class Conversion:
    alpha: float
    beta: float = 0.0


@dataclass(frozen=True)
class UnitSpec:
    id: str
    kind: str
    capacity: float
    inputs: Mapping[str, Conversion]
    min_part_load: float = 0.0
    coupled: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unit {self.id}: unknown kind {self.kind!r}")
        required = KINDS[self.kind][1]
        if required not in self.inputs:
            raise ValueError(f"unit {self.id}: kind {self.kind} needs a {required} input")
        if not self.capacity > 0:
            raise ValueError(f"unit {self.id}: capacity must be positive")
        if not 0.0 <= self.min_part_load < 1.0:
            raise ValueError(f"unit {self.id}: min_part_load must lie in [0, 1)")
        for product, conv in self.inputs.items():
            if product not in PRODUCTS:
                raise ValueError(f"unit {self.id}: unknown input product {product!r}")
            if not conv.alpha > 0 or conv.beta < 0:
                raise ValueError(f"unit {self.id}: need alpha > 0 and beta >= 0 for {product}")
        for product, ratio in self.coupled.items():
            if product not in PRODUCTS or product == GAS or ratio < 0:
                raise ValueError(f"unit {self.id}: invalid coupled output {product!r}")

    @property
    def primary(self) -> str:
        return KINDS[self.kind][0]

    @property
    def needs_commitment(self) -> bool:
        return self.min_part_load > 0 or any(c.beta > 0 for c in self.inputs.values())

    def output_coef(self, product: str) -> float:
        """Net production of ``product`` per MW of primary output (ignoring ``beta``)."""
        coef = 1.0 if product == self.primary else 0.0
        coef += self.coupled.get(product, 0.0)
        if product in self.inputs:
            coef -= self.inputs[product].alpha
        return coef

    def on_coef(self, product: str) -> float:
        return -self.inputs[product].beta if product in self.inputs else 0.0

    def electric_capacity(self) -> float:
        """Largest absolute electricity flow of the unit."""
        return abs(self.output_coef(ELECTRICITY)) * self.capacity + abs(self.on_coef(ELECTRICITY))


@dataclass(frozen=True)
class EnergySystem:
    units: tuple[UnitSpec, ...]
    gas_price: float = 0.0

    def __post_init__(self):
        ids = [u.id for u in self.units]
        if len(set(ids)) != len(ids):
            raise ValueError("unit ids must be unique")

    def with_gas_price(self, price: float) -> "EnergySystem":
        return EnergySystem(self.units, price)


@dataclass(frozen=True)
class Demands:
    el: float = 0.0
    heat: float = 0.0
    cool: float = 0.0

    def __post_init__(self):
        if min(self.el, self.heat, self.cool) < 0:
            raise ValueError("demands must be nonnegative")

    def of(self, product: str) -> float:
        return {ELECTRICITY: self.el, HEAT: self.heat, COOLING: self.cool}.get(product, 0.0)


@dataclass(frozen=True)
class DispatchResult:
    """Unit states and signed product flows (outputs positive, inputs negative)."""

    on: dict[str, int]
    flows: dict[str, dict[str, float]]
    gas: float
    cost: float

    def net(self, product: str) -> float:
        return sum(f.get(product, 0.0) for f in self.flows.values())


@dataclass(frozen=True)
class MarginalCostFit:
    mc: float
    intercept: float
    r2: float
    demands: tuple[float, ...]
    costs: tuple[float, ...]


@dataclass
class UnitBlock:
    """Variables of one copy of the site inside a larger model."""

    system: EnergySystem
    out: dict[str, int]
    on: dict[str, int]

    def net_terms(self, product: str) -> dict[int, float]:
        terms: dict[int, float] = {}
        for u in self.system.units:
            coef = u.output_coef(product)
            if coef:
                terms[self.out[u.id]] = terms.get(self.out[u.id], 0.0) + coef
            oc = u.on_coef(product)
            if oc and u.id in self.on:
                terms[self.on[u.id]] = terms.get(self.on[u.id], 0.0) + oc
        return terms

    def gas_terms(self) -> dict[int, float]:
        return {v: -c for v, c in self.net_terms(GAS).items()}

    def read(self, x) -> DispatchResult:
        on, flows = {}, {}
        for u in self.system.units:
            out = float(x[self.out[u.id]])
            state = int(round(x[self.on[u.id]])) if u.id in self.on else int(out > 1e-9)
            on[u.id] = state
            beta_on = state if u.id in self.on else 0
            f = {}
            for p in PRODUCTS:
                val = u.output_coef(p) * out + u.on_coef(p) * beta_on
                if val != 0.0 or p == u.primary:
                    f[p] = val
            flows[u.id] = f
        gas = -sum(f.get(GAS, 0.0) for f in flows.values())
        return DispatchResult(on, flows, gas, gas * self.system.gas_price)


def add_units(model: Model, system: EnergySystem, tag: str = "") -> UnitBlock:
    """Add output and commitment variables plus part-load rows for every unit."""
    out, on = {}, {}
    for u in system.units:
        x = model.add_var(f"{tag}P[{u.id}]", 0.0, u.capacity)
        out[u.id] = x
        if u.needs_commitment:
            z = model.add_var(f"{tag}on[{u.id}]", vtype=BINARY)
            on[u.id] = z
            model.add_constr({x: 1.0, z: -u.capacity}, "<=", 0.0, f"{tag}cap[{u.id}]")
            if u.min_part_load > 0:
                model.add_constr({x: 1.0, z: -u.min_part_load * u.capacity}, ">=", 0.0,
                                 f"{tag}minload[{u.id}]")
    return UnitBlock(system, out, on)


def add_thermal_balances(model: Model, block: UnitBlock, demands: Demands, tag: str = "") -> None:
    for product in (HEAT, COOLING):
        terms = block.net_terms(product)
        if terms or demands.of(product) > 0:
            model.add_constr(terms, GE, demands.of(product), f"{tag}bal[{product}]")


def _dispatch_model(system: EnergySystem, demands: Demands, net_grid: float):
    model = Model("dispatch")
    block = add_units(model, system)
    model.add_constr(block.net_terms(ELECTRICITY), EQ, demands.el - net_grid, f"bal[{ELECTRICITY}]")
    add_thermal_balances(model, block, demands)
    model.set_objective({v: c * system.gas_price for v, c in block.gas_terms().items()})
    return model, block


def _diagnose(system: EnergySystem, demands: Demands, net_grid: float) -> list[tuple[str, str]]:
    """Balances that need slack for the demands to be met."""
    model = Model("diagnose")
    block = add_units(model, system)
    slack = {}
    el_terms = block.net_terms(ELECTRICITY)
    up = model.add_var("short[electricity]")
    down = model.add_var("surplus[electricity]")
    slack[up] = (ELECTRICITY, "insufficient supply")
    slack[down] = (ELECTRICITY, "surplus cannot be absorbed")
    el_terms[up] = 1.0
    el_terms[down] = -1.0
    model.add_constr(el_terms, EQ, demands.el - net_grid)
    for product in (HEAT, COOLING):
        s = model.add_var(f"short[{product}]")
        slack[s] = (product, "insufficient supply")
        terms = block.net_terms(product)
        terms[s] = 1.0
        model.add_constr(terms, GE, demands.of(product))
    model.set_objective({s: 1.0 for s in slack})
    sol = solve_mip(model)
    if not sol.has_solution:
        return [("unknown", "")]
    return [label for s, label in slack.items() if sol.x[s] > 1e-6]


def dispatch(system: EnergySystem, demands: Demands, net_grid_electricity: float = 0.0,
             **solver_options) -> DispatchResult:
    """Cost-minimal unit schedule for one hour.

    ``net_grid_electricity`` is the fixed electricity import (positive) or
    export (negative) of the site. Raises :class:`InfeasibleDispatch` naming
    the failing product balances.
    """
    model, block = _dispatch_model(system, demands, net_grid_electricity)
    sol = solve_mip(model, **solver_options)
    if not sol.has_solution:
        failing = _diagnose(system, demands, net_grid_electricity)
        detail = ", ".join(f"{p} ({why})" for p, why in failing)
        raise InfeasibleDispatch(
            f"dispatch infeasible for {demands} with grid exchange {net_grid_electricity:g} MW; "
            f"failing balance: {detail}", [p for p, _ in failing])
    return block.read(sol.x)


def net_electricity_range(system: EnergySystem, demands: Demands, **solver_options) -> tuple[float, float]:
    """Smallest and largest net electricity generation that still serves heat and cooling."""
    bounds = []
    for sign in (1.0, -1.0):
        model = Model("net-el")
        block = add_units(model, system)
        add_thermal_balances(model, block, demands)
        model.set_objective({v: sign * c for v, c in block.net_terms(ELECTRICITY).items()})
        sol = solve_mip(model, **solver_options)
        if not sol.has_solution:
            failing = _diagnose(system, Demands(0.0, demands.heat, demands.cool), 0.0)
            thermal = [p for p, _ in failing if p in (HEAT, COOLING)] or [p for p, _ in failing]
            raise InfeasibleDispatch(f"thermal demands cannot be met: {', '.join(thermal)}", thermal)
        bounds.append(sign * sol.objective)
    lo, hi = bounds
    return lo, hi


def flex_capacity(system: EnergySystem, demands: Demands, **solver_options) -> dict[str, float]:
    """Extra net generation and extra net consumption available beyond the demands."""
    dispatch(system, demands, **solver_options)
    lo, hi = net_electricity_range(system, demands, **solver_options)
    return {"max_positive": max(hi - demands.el, 0.0), "max_negative": max(demands.el - lo, 0.0)}


def marginal_cost(system: EnergySystem, demands: Demands, sweep_points: int = 11,
                  **solver_options) -> MarginalCostFit:
    """Slope of least-squares cost versus electricity demand from zero to maximum output.

    ``demands.el`` is ignored; heat and cooling demands stay fixed during the
    sweep and no grid exchange is allowed.
    """
    if sweep_points < 3:
        raise ValueError("sweep_points must be at least 3")
    _, max_out = net_electricity_range(system, demands, **solver_options)
    if max_out <= 1e-9:
        raise ValueError("system has no electricity output; marginal-cost sweep is degenerate")
    levels = np.linspace(0.0, max_out, sweep_points)
    costs = []
    for level in levels:
        try:
            res = dispatch(system, Demands(float(level), demands.heat, demands.cool), **solver_options)
        except InfeasibleDispatch as exc:
            raise InfeasibleDispatch(
                f"marginal-cost sweep infeasible at electricity demand {level:g} MW: {exc}",
                exc.products) from exc
        costs.append(res.cost)
    costs = np.array(costs)
    slope, intercept = np.polyfit(levels, costs, 1)
    fitted = slope * levels + intercept
    ss_res = float(np.sum((costs - fitted) ** 2))
    ss_tot = float(np.sum((costs - costs.mean()) ** 2))
    scale = max(1.0, float(np.abs(costs).max()))
    r2 = 1.0 if ss_tot <= (1e-12 * scale) ** 2 else max(0.0, 1.0 - ss_res / ss_tot)
    return MarginalCostFit(float(slope), float(intercept), r2,
                           tuple(float(v) for v in levels), tuple(float(c) for c in costs))


# -- files -------------------------------------------------------------

def _unit_from_dict(d: dict) -> UnitSpec:
    kind = d["kind"]
    primary = d.get("primary", KINDS.get(kind, (None,))[0])
    if kind in KINDS and primary != KINDS[kind][0]:
        raise ValueError(f"unit {d.get('id')}: kind {kind} produces {KINDS[kind][0]}, not {primary}")
    inputs = {p: Conversion(float(c["alpha"]), float(c.get("beta", 0.0)))
              for p, c in d["inputs"].items()}
    return UnitSpec(id=str(d["id"]), kind=kind, capacity=float(d["capacity_mw"]), inputs=inputs,
                    min_part_load=float(d.get("min_part_load", 0.0)),
                    coupled={p: float(r) for p, r in d.get("coupled", {}).items()})


def _unit_to_dict(u: UnitSpec) -> dict:
    out = {"id": u.id, "kind": u.kind, "primary": u.primary, "capacity_mw": u.capacity,
           "min_part_load": u.min_part_load,
           "inputs": {p: {"alpha": c.alpha, "beta": c.beta} for p, c in u.inputs.items()}}
    if u.coupled:
        out["coupled"] = dict(u.coupled)
    return out


def load_units(path, gas_price: float | None = None) -> EnergySystem:
    """Read ``units.json``: ``{"units": [...], "gas_price_eur_mwh": optional}``."""
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    units = tuple(_unit_from_dict(d) for d in data["units"])
    price = gas_price if gas_price is not None else float(data.get("gas_price_eur_mwh", 0.0))
    return EnergySystem(units, price)


def save_units(system: EnergySystem, path) -> None:
    data = {"gas_price_eur_mwh": system.gas_price, "units": [_unit_to_dict(u) for u in system.units]}
    Path(path).write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")


def reference_site(gas_price: float = 25.0) -> EnergySystem:
    """Sixteen-unit industrial site with fixture conversion parameters (see ``data/reference_site.json``)."""
    return load_units(Path(__file__).with_name("data") / "reference_site.json", gas_price)
