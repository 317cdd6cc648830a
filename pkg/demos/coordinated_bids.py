"""
Choosing a balancing-power bid alongside day-ahead sales
========================================================

A 10 MW generator at 50 EUR/MWh can sell day-ahead at 60 or reserve capacity
for balancing power. Two capacity offers trade price against acceptance.
Each slice is solved once per offer and the cheaper expected cost wins.
"""

import numpy as np

from flexbid.fixtures import generator_slice, random_slice
from flexbid.multimarket import evaluate_schedule, optimize_slice

day, generator = generator_slice()
res = optimize_slice(0, day, generator)
for i, (c, v) in enumerate(zip(day.combinations[0], res.candidates)):
    print(f"offer {i + 1}: cp+={c.cp_plus:4.1f} accepted w.p. {c.acc_prob_plus:.2f} -> expected OPEX {v:8.2f}")
print(f"chosen offer {res.combination_index + 1}, tender {res.bp_plus} MW, breakdown {res.breakdown}")

# an independent re-evaluation reproduces the solver's expected cost
print("re-evaluated:", round(evaluate_schedule(res, day, generator).expected_opex, 6))

# more markets never cost more
day, site = random_slice(np.random.default_rng(3), n_combinations=3, bp_max=2)
for markets in ("DA", "DA+ID", "DA+BP", "DA+ID+BP"):
    print(f"{markets:9s} {optimize_slice(0, day, site, markets).expected_opex:9.2f} EUR")
