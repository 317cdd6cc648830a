"""Synthetic datasets and small unit systems for demos and tests.

The generated series follow simple daily shapes plus seeded noise. They
stand in for historical market data and carry no empirical meaning.
"""

from __future__ import annotations

import csv
import json
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

from .binomial_option import OptionQuote, TradingSession
from .energy_system import (ELECTRICITY, GAS, HEAT, COOLING, Conversion, Demands, EnergySystem, UnitSpec,
                            marginal_cost, save_units)
from .market_data import CombinationSet, PriceCombination
from .multimarket import SLICE_HOURS, DayInputs, HourInputs

__all__ = ["tiny_system", "single_generator", "generator_slice", "random_slice", "write_synthetic_dataset",
           "DEFAULT_START"]

DEFAULT_START = datetime(2021, 1, 4)


def tiny_system(gas_price: float = 25.0) -> EnergySystem:
    """CHP, boiler, electrode boiler and compression chiller without part-load limits."""
    units = (
        UnitSpec("CHP1", "chp", 4.0, {GAS: Conversion(2.5)}, 0.0, {HEAT: 0.9}),
        UnitSpec("B1", "boiler", 5.0, {GAS: Conversion(1 / 0.9)}),
        UnitSpec("EB1", "electrode_boiler", 1.5, {ELECTRICITY: Conversion(1.0)}),
        UnitSpec("CC1", "compression_chiller", 2.0, {ELECTRICITY: Conversion(0.2)}),
    )
    return EnergySystem(units, gas_price)


def single_generator(capacity: float = 10.0, alpha: float = 2.5, gas_price: float = 20.0) -> EnergySystem:
    """One gas-fired generator with constant marginal cost ``alpha * gas_price``."""
    return EnergySystem((UnitSpec("G1", "chp", capacity, {GAS: Conversion(alpha)}),), gas_price)


def generator_slice(da_price: float = 60.0, bp_max: int = 10) -> tuple[DayInputs, EnergySystem]:
    """One slice of the 10 MW, 50 EUR/MWh generator with two positive-capacity offers.

    The offers differ in capacity price (20 vs 5 EUR/MW/h) and acceptance
    (0.5 vs 1.0); both share an energy price of 80 EUR/MWh requested with
    probability 0.25. Intraday options are zero and there is no site demand.
    """
    system = single_generator(10.0, 2.5, 20.0)
    combos = CombinationSet((
        PriceCombination(20.0, 80.0, 0.0, 0.0, 0.5, 0.0, 0.25, 0.0),
        PriceCombination(5.0, 80.0, 0.0, 0.0, 1.0, 0.0, 0.25, 0.0),
    ))
    hour = HourInputs(da_price, 20.0, 50.0, Demands(), quote=OptionQuote.zero())
    return DayInputs((hour,) * SLICE_HOURS, (combos,), bp_max), system


def random_slice(rng: np.random.Generator, n_combinations: int = 3, bp_max: int = 3,
                 sigma_multiplier: float = 1.0, system: EnergySystem | None = None,
                 n_steps: int = 16) -> tuple[DayInputs, EnergySystem]:
    """Random feasible one-slice instance on :func:`tiny_system`.

    Demands stay inside the tiny site's capabilities; each hour's marginal
    cost comes from the dispatch sweep and its intraday quote from a random
    session centred on the day-ahead price.
    """
    system = system or tiny_system()
    hours = []
    for _ in range(SLICE_HOURS):
        d = Demands(float(rng.uniform(0.3, 2.0)), float(rng.uniform(0.5, 3.0)), float(rng.uniform(0.2, 1.2)))
        mc = marginal_cost(system, d, 5).mc
        da = float(rng.uniform(20.0, 90.0))
        sigma = float(rng.uniform(2.0, 12.0)) * sigma_multiplier
        session = TradingSession(da, float(rng.uniform(-2.0, 2.0)), sigma, n_steps, mc)
        hours.append(HourInputs(da, system.gas_price, mc, d, session=session))
    combos = []
    for _ in range(n_combinations):
        combos.append(PriceCombination(
            float(rng.uniform(0.0, 15.0)), float(rng.uniform(40.0, 150.0)),
            float(rng.uniform(0.0, 15.0)), float(rng.uniform(-30.0, 40.0)),
            float(rng.uniform(0.1, 1.0)), float(rng.uniform(0.1, 1.0)),
            float(rng.uniform(0.05, 0.9)), float(rng.uniform(0.05, 0.9))))
    return DayInputs(tuple(hours), (CombinationSet(tuple(combos)),), bp_max), system


def _daily(hours: np.ndarray, peak_hour: float, width: float) -> np.ndarray:
    phase = ((hours - peak_hour + 12) % 24) - 12
    return np.exp(-0.5 * (phase / width) ** 2)


def write_synthetic_dataset(directory, weeks: int = 4, seed: int = 0, start: datetime = DEFAULT_START,
                            system: EnergySystem | None = None) -> dict[str, Path]:
    """Write forecasts, spot prices, auction results, demands, units and a run config.

    Returns the paths by role. The run config points at the files with
    relative paths and selects the first generated day for optimisation.
    """
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    n_q = weeks * 168 * 4
    t_q = np.arange(n_q) / 4.0
    hod = t_q % 24

    # slowly varying wind regime so that clusters differ in volatility
    regime = np.repeat(rng.gamma(2.0, 4000.0, size=n_q // 96 + 1), 96)[:n_q]
    wind = np.clip(regime + rng.normal(0, 800, n_q), 0, None)
    pv = np.clip(9000 * _daily(hod, 13, 2.5) * rng.uniform(0.4, 1.0, n_q // 96 + 1).repeat(96)[:n_q], 0, None)
    load = 45000 + 12000 * _daily(hod, 12, 5) + rng.normal(0, 1000, n_q)
    stamps_q = [start + timedelta(minutes=15 * i) for i in range(n_q)]

    paths = {k: out / f for k, f in (("forecasts", "forecasts.csv"), ("spot", "spot.csv"),
                                      ("bp_auctions", "bp_auctions.csv"), ("demands", "demands.csv"),
                                      ("units", "units.json"), ("config", "config.json"))}
    with open(paths["forecasts"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", "wind_mw", "pv_mw", "load_mw"])
        for t, a, b, c in zip(stamps_q, wind, pv, load):
            w.writerow([t.isoformat(), f"{a:.1f}", f"{b:.1f}", f"{c:.1f}"])

    n_h = n_q // 4
    hw = wind.reshape(-1, 4).mean(axis=1)
    hp = pv.reshape(-1, 4).mean(axis=1)
    hl = load.reshape(-1, 4).mean(axis=1)
    residual = hl - hw - hp
    da = 20 + 0.0012 * residual + rng.normal(0, 3, n_h)
    vol = 3 + 0.0006 * hw
    id1 = da + rng.normal(0.5, 1.0, n_h) * vol
    stamps_h = [start + timedelta(hours=h) for h in range(n_h)]
    with open(paths["spot"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", "da_price_eur_mwh", "id1_price_eur_mwh"])
        for t, a, b in zip(stamps_h, da, id1):
            w.writerow([t.isoformat(), f"{a:.2f}", f"{b:.2f}"])

    n_s = n_h // 4
    with open(paths["bp_auctions"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["slice_start", "direction", "marginal_cp_eur_mw_h", "marginal_ep_eur_mwh"])
        for s in range(n_s):
            t = start + timedelta(hours=4 * s)
            for d, base_cp, base_ep in (("pos", 6.0, 90.0), ("neg", 4.0, 10.0)):
                cp = base_cp * rng.lognormal(0, 0.6)
                ep = base_ep + rng.normal(0, 30.0)
                w.writerow([t.isoformat(), d, f"{cp:.3f}", f"{ep:.3f}"])

    hod_h = np.arange(n_h) % 24
    el = 1.5 + 1.0 * _daily(hod_h, 11, 4) + rng.uniform(0, 0.3, n_h)
    heat = 2.0 + 1.0 * _daily(hod_h, 7, 3) + rng.uniform(0, 0.3, n_h)
    cool = 0.5 + 0.8 * _daily(hod_h, 15, 3) + rng.uniform(0, 0.2, n_h)
    with open(paths["demands"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", "el_mw", "heat_mw", "cool_mw"])
        for t, a, b, c in zip(stamps_h, el, heat, cool):
            w.writerow([t.isoformat(), f"{a:.3f}", f"{b:.3f}", f"{c:.3f}"])

    save_units(system or tiny_system(), paths["units"])
    config = {
        "forecasts": "forecasts.csv", "spot": "spot.csv", "bp_auctions": "bp_auctions.csv",
        "demands": "demands.csv", "units": "units.json", "parameters": "parameters.json",
        "schedule": "schedule.json", "day": start.date().isoformat(), "gas_price": 25.0,
        "k": 4, "seed": seed, "n_steps": 64, "bp_max": 10, "markets": "DA+ID+BP",
    }
    paths["config"].write_text(json.dumps(config, indent=2) + "\n", encoding="utf-8")
    return paths
