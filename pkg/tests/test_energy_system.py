import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flexbid.energy_system import (ELECTRICITY, GAS, HEAT, COOLING, Conversion, Demands, EnergySystem,
                                   InfeasibleDispatch, UnitSpec, dispatch, flex_capacity, load_units,
                                   marginal_cost, net_electricity_range, save_units, reference_site)
from flexbid.fixtures import single_generator, tiny_system


def boiler(cap=4.0, uid="B1", mpl=0.0):
    return UnitSpec(uid, "boiler", cap, {GAS: Conversion(1 / 0.9)}, mpl)


def test_single_boiler_closed_form():
    res = dispatch(EnergySystem((boiler(),), 30.0), Demands(heat=3.6))
    assert res.gas == pytest.approx(4.0)
    assert res.cost == pytest.approx(120.0)
    assert res.on == {"B1": 1}


def test_zero_demand_costs_nothing():
    res = dispatch(reference_site(), Demands())
    assert res.cost == pytest.approx(0.0, abs=1e-9)
    assert not any(res.on.values())


def test_chp_coproduct_covers_heat():
    s = reference_site()
    chp = next(u for u in s.units if u.id == "CHP1")
    assert chp.capacity == pytest.approx(4.4)
    assert chp.capacity * chp.coupled[HEAT] == pytest.approx(4.0, abs=1e-5)
    only = EnergySystem((chp,), 25.0)
    res = dispatch(only, Demands(el=4.4, heat=4.0))
    assert res.flows["CHP1"][ELECTRICITY] == pytest.approx(4.4)
    assert res.flows["CHP1"][HEAT] == pytest.approx(4.0, abs=1e-5)
    assert res.cost == pytest.approx((2.25 * 4.4 + 0.44) * 25.0)


def test_infeasible_names_product():
    with pytest.raises(InfeasibleDispatch) as exc:
        dispatch(EnergySystem((boiler(),), 30.0), Demands(heat=5.0))
    assert exc.value.products == (HEAT,)
    with pytest.raises(InfeasibleDispatch) as exc:
        dispatch(single_generator(), Demands(el=12.0))
    assert exc.value.products == (ELECTRICITY,)
    with pytest.raises(InfeasibleDispatch, match="cooling"):
        dispatch(tiny_system(), Demands(cool=50.0))


def test_part_load_forbids_small_outputs():
    # heat balance is a lower bound, so a committed unit overproduces
    res = dispatch(EnergySystem((boiler(mpl=0.5),), 30.0), Demands(heat=1.0))
    assert res.flows["B1"][HEAT] == pytest.approx(2.0)
    assert res.cost == pytest.approx(2.0 / 0.9 * 30.0)
    s2 = EnergySystem((boiler(mpl=0.5), boiler(cap=1.0, uid="B2")), 30.0)
    assert dispatch(s2, Demands(heat=1.0)).on == {"B1": 0, "B2": 1}


def test_unit_validation():
    with pytest.raises(ValueError):
        UnitSpec("X", "boiler", 0.0, {GAS: Conversion(1.0)})
    with pytest.raises(ValueError):
        UnitSpec("X", "boiler", 1.0, {ELECTRICITY: Conversion(1.0)})
    with pytest.raises(ValueError):
        UnitSpec("X", "boiler", 1.0, {GAS: Conversion(1.0)}, min_part_load=1.0)
    with pytest.raises(ValueError):
        UnitSpec("X", "heat_pump", 1.0, {GAS: Conversion(1.0)})
    with pytest.raises(ValueError):
        EnergySystem((boiler(), boiler()))
    with pytest.raises(ValueError):
        Demands(el=-1)


def test_affine_generator_recovers_slope():
    fit = marginal_cost(single_generator(alpha=1 / 0.4, gas_price=30.0), Demands())
    assert abs(fit.mc - 75.0) <= 1e-9
    assert fit.r2 == 1.0
    assert abs(fit.intercept) <= 1e-9
    assert len(fit.demands) == 11 and fit.demands[-1] == pytest.approx(10.0)


def test_no_electric_units_is_degenerate():
    with pytest.raises(ValueError, match="degenerate"):
        marginal_cost(EnergySystem((boiler(),), 30.0), Demands(heat=1.0))
    with pytest.raises(ValueError):
        marginal_cost(single_generator(), Demands(), sweep_points=2)


def test_fit_quality_is_reported_for_nonlinear_system():
    fit = marginal_cost(reference_site(), Demands(heat=4.0, cool=2.0), sweep_points=9)
    assert 0.0 <= fit.r2 <= 1.0
    assert fit.mc > 0


def test_flex_capacity_examples():
    assert flex_capacity(single_generator(), Demands(el=4.0)) == {"max_positive": 6.0, "max_negative": 4.0}
    eb = UnitSpec("EB", "electrode_boiler", 2.0, {ELECTRICITY: Conversion(1.0)})
    s = EnergySystem(single_generator().units + (eb,), 20.0)
    flex = flex_capacity(s, Demands(el=4.0))
    assert flex["max_positive"] == pytest.approx(6.0)
    assert flex["max_negative"] == pytest.approx(6.0)
    assert flex_capacity(EnergySystem((boiler(),), 30.0), Demands(heat=1.0))["max_positive"] == 0.0


demand_values = st.floats(0.0, 3.0)


@settings(max_examples=40)
@given(demand_values, demand_values, demand_values, st.sampled_from(["el", "heat", "cool"]), st.floats(0.01, 1.0))
def test_cost_non_decreasing_in_demand(el, heat, cool, which, extra):
    s = tiny_system()
    base = Demands(el, heat, cool)
    more = Demands(**{**base.__dict__, which: getattr(base, which) + extra})
    try:
        low = dispatch(s, base).cost
        high = dispatch(s, more).cost
    except InfeasibleDispatch:
        return
    assert high >= low - 1e-7


@settings(max_examples=40)
@given(st.floats(0.0, 3.5), st.floats(-3.0, 3.0), st.floats(0.0, 3.0))
def test_grid_exchange_equals_reduced_demand(el, g, heat):
    s = tiny_system()
    g = min(g, el)
    try:
        b = dispatch(s, Demands(el - g, heat))
    except InfeasibleDispatch:
        with pytest.raises(InfeasibleDispatch):
            dispatch(s, Demands(el, heat), net_grid_electricity=g)
        return
    a = dispatch(s, Demands(el, heat), net_grid_electricity=g)
    assert a.cost == pytest.approx(b.cost, abs=1e-7)


@settings(max_examples=15)
@given(st.floats(0.1, 8.0))
def test_slope_invariant_under_dedicated_boiler(heat):
    gen = single_generator(alpha=2.0, gas_price=30.0)
    with_boiler = EnergySystem(gen.units + (boiler(cap=10.0),), 30.0)
    a = marginal_cost(gen, Demands())
    b = marginal_cost(with_boiler, Demands(heat=heat))
    assert b.mc == pytest.approx(a.mc, abs=1e-9)
    assert b.r2 == pytest.approx(1.0)


def test_net_range_of_tiny_system():
    lo, hi = net_electricity_range(tiny_system(), Demands(heat=1.0, cool=1.0))
    assert hi == pytest.approx(4.0 - 0.2)
    # thermal balances are lower bounds, so the chiller may run at full load
    assert lo == pytest.approx(-1.5 - 0.4)


def test_units_round_trip(tmp_path):
    s = reference_site(31.0)
    save_units(s, tmp_path / "u.json")
    again = load_units(tmp_path / "u.json")
    assert again == s
    assert load_units(tmp_path / "u.json", gas_price=10.0).gas_price == 10.0
    assert len(s.units) == 16
    assert sum(u.capacity for u in s.units if u.kind == "boiler") == pytest.approx(11.0)
