"""
Marginal electricity cost of a multi-energy site
================================================

The site serves heat and cooling from boilers, CHP units and chillers. The
marginal electricity cost is the slope of the cheapest dispatch cost over
a sweep of electricity demand, with heat and cooling held fixed.
"""

from flexbid.energy_system import Demands, dispatch, flex_capacity, marginal_cost, reference_site

site = reference_site(gas_price=25.0)
print(f"{len(site.units)} units, gas at {site.gas_price} EUR/MWh")

# one hour of winter-like demand
demands = Demands(el=6.0, heat=8.0, cool=3.0)
res = dispatch(site, demands)
running = [uid for uid, on in res.on.items() if on]
print(f"dispatch cost {res.cost:.1f} EUR/h, gas {res.gas:.2f} MW, running: {', '.join(running)}")
print("flexibility:", flex_capacity(site, demands))

# the fit is reported, including how well a line explains the sweep
for heat in (2.0, 8.0, 14.0):
    fit = marginal_cost(site, Demands(heat=heat, cool=3.0))
    print(f"heat {heat:4.1f} MW: mc {fit.mc:6.2f} EUR/MWh, r2 {fit.r2:.4f}")
