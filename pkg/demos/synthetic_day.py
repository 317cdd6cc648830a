"""
From raw series to a day's bid schedule
=======================================

Synthetic forecasts, spot prices and auction results are clustered, the
market parameters fitted, and one delivery day optimised slice by slice.
"""

import tempfile
from pathlib import Path

from flexbid import market_data as md
from flexbid.energy_system import load_units
from flexbid.fixtures import write_synthetic_dataset
from flexbid.multimarket import optimize_day
from flexbid.pipeline import build_day_inputs, day_starts

workdir = Path(tempfile.mkdtemp())
paths = write_synthetic_dataset(workdir, weeks=3, seed=0)
forecasts = md.read_forecasts(paths["forecasts"])
spot = md.read_spot(paths["spot"])
params = md.prepare_parameters(forecasts, spot, md.read_bp_auctions(paths["bp_auctions"]), k=4, seed=0)
print("intraday drift per cluster:", params.intraday.mu.round(2))
print("intraday volatility per cluster:", params.intraday.sigma.round(2))

start = day_starts(forecasts)[0]
system = load_units(paths["units"])
day = build_day_inputs(params, start, forecasts, spot, md.read_demands(paths["demands"]), system, 25.0,
                       n_steps=32, bp_max=3)
schedule = optimize_day(day, system)
print(f"{start.date()}: expected OPEX {schedule.expected_opex:.2f} EUR")
for r in schedule.slices:
    print(f"  slice {r.slice_index}: BP+ {r.bp_plus} MW at {r.combination.cp_plus:.2f}, "
          f"BP- {r.bp_minus} MW at {r.combination.cp_minus:.2f}")
