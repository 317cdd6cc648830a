"""Assemble one day's optimisation inputs from fitted parameters and raw series."""

from __future__ import annotations

from datetime import datetime, timedelta
from typing import Mapping, Sequence

from .binomial_option import TradingSession
from .energy_system import Demands, EnergySystem, marginal_cost
from .market_data import (CombinationSet, ForecastRecord, InsufficientData, MarketParameters,
                          aggregate_forecasts)
from .multimarket import HOURS_PER_DAY, SLICE_HOURS, DayInputs, HourInputs

__all__ = ["build_day_inputs", "hourly_sessions", "day_starts"]


def day_starts(forecasts: Sequence[ForecastRecord]) -> list[datetime]:
    """Midnights of every complete forecast day."""
    stamps = {r.timestamp for r in forecasts}
    out = []
    for r in forecasts:
        t = r.timestamp
        if t.hour == 0 and t.minute == 0 and t + timedelta(hours=24) - timedelta(minutes=15) in stamps:
            out.append(t)
    return out


def _day_records(forecasts, start):
    end = start + timedelta(hours=HOURS_PER_DAY)
    recs = [r for r in forecasts if start <= r.timestamp < end]
    if len(recs) != 4 * HOURS_PER_DAY:
        raise InsufficientData(f"forecasts for {start.date()} are incomplete ({len(recs)} of 96 quarter-hours)")
    return recs


def hourly_sessions(params: MarketParameters, forecasts: Sequence[ForecastRecord], start: datetime,
                    spot: Mapping[datetime, tuple[float, float]], mcs: Sequence[float],
                    n_steps: int = 64, sigma_multiplier: float = 1.0) -> list[TradingSession]:
    """Intraday sessions of a day: DA price as start level, cluster drift and scaled volatility."""
    hourly = aggregate_forecasts(_day_records(forecasts, start), 1)
    labels = params.hourly.predict(hourly.values)
    out = []
    for t, k, mc in zip(hourly.starts, labels, mcs):
        if t not in spot:
            raise InsufficientData(f"no day-ahead price for {t.isoformat()}")
        sigma = float(params.intraday.sigma[k]) * sigma_multiplier
        try:
            out.append(TradingSession(spot[t][0], float(params.intraday.mu[k]), sigma, n_steps, mc))
        except ValueError as exc:
            raise InsufficientData(f"hour {t.isoformat()} (cluster {k}): {exc}") from exc
    return out


def build_day_inputs(params: MarketParameters, start: datetime, forecasts: Sequence[ForecastRecord],
                     spot: Mapping[datetime, tuple[float, float]],
                     demands: Mapping[datetime, tuple[float, float, float]], system: EnergySystem,
                     gas_price: float, n_steps: int = 64, sigma_multiplier: float = 1.0, bp_max: int = 10,
                     sweep_points: int = 11) -> DayInputs:
    """Day inputs for the 24 hours starting at ``start``.

    Marginal costs come from the dispatch sweep under each hour's heat and
    cooling demands; balancing-power ladders from each slice's cluster.
    """
    system = system.with_gas_price(gas_price)
    hours_t = [start + timedelta(hours=h) for h in range(HOURS_PER_DAY)]
    loads = []
    for t in hours_t:
        if t not in demands:
            raise InsufficientData(f"no demands for {t.isoformat()}")
        loads.append(Demands(*demands[t]))
    mc_cache: dict[tuple[float, float], float] = {}
    mcs = []
    for d in loads:
        key = (d.heat, d.cool)
        if key not in mc_cache:
            mc_cache[key] = marginal_cost(system, d, sweep_points).mc
        mcs.append(mc_cache[key])
    sessions = hourly_sessions(params, forecasts, start, spot, mcs, n_steps, sigma_multiplier)
    hours = tuple(HourInputs(s.s_ini, gas_price, mc, d, session=s) for s, mc, d in zip(sessions, mcs, loads))

    slices = aggregate_forecasts(_day_records(forecasts, start), SLICE_HOURS)
    labels = params.slices.predict(slices.values)
    combos = tuple(CombinationSet.from_ladder(params.ladders[k]) for k in labels)
    return DayInputs(hours, combos, bp_max)
