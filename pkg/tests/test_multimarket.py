import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flexbid.binomial_option import OptionQuote, TradingSession, option_values
from flexbid.energy_system import Demands, InfeasibleDispatch
from flexbid.fixtures import generator_slice, random_slice, single_generator, tiny_system
from flexbid.market_data import CombinationSet, PriceCombination
from flexbid.multimarket import (NULL_COMBINATION, BidSchedule, ConsistencyError, DayInputs, HourInputs,
                                 build_scenarios, build_subproblem, evaluate_schedule,
                                 optimize_day, optimize_slice, parse_markets)
from flexbid.opt_kernel import solve_mip

probs = st.floats(0.0, 1.0)


def combo(ap, am, qp, qm):
    return PriceCombination(5.0, 80.0, 3.0, 10.0, ap, am, qp, qm)


def test_scenario_order_and_flags():
    sc = build_scenarios(combo(0.5, 0.5, 0.25, 0.25), OptionQuote(1.0, 1.0, 0.6, 0.4))
    assert len(sc) == 16
    assert [(s.a_plus, s.a_minus, s.m, s.r) for s in sc[:4]] == [
        (0, 0, "sell", "R_pos"), (0, 0, "sell", "R_neg"), (0, 0, "buy", "R_pos"), (0, 0, "buy", "R_neg")]
    both = [s for s in sc if s.branch == (1, 1)]
    assert [s.probability for s in both] == pytest.approx([0.25 * 0.6 * 0.5, 0.25 * 0.6 * 0.5,
                                                           0.25 * 0.4 * 0.5, 0.25 * 0.4 * 0.5])
    only_plus = [s for s in sc if s.branch == (1, 0)]
    assert [s.s_ep_plus for s in only_plus] == [1, 0, 1, 0]
    assert all(s.s_ep_minus == 0 for s in only_plus)


def test_certain_outcomes_leave_one_scenario():
    sc = build_scenarios(combo(1.0, 0.0, 1.0, 0.0), OptionQuote(0.0, 0.0, 1.0, 0.0))
    live = [s for s in sc if s.probability > 0]
    assert len(live) == 1 and live[0].branch == (1, 0) and live[0].m == "sell" and live[0].r == "R_pos"


def test_scenario_errors():
    with pytest.raises(ValueError):
        build_scenarios(combo(0.5, 0.5, 0.0, 0.0), OptionQuote.zero())
    # zero mass on the doubly accepted branch makes the split irrelevant
    assert sum(s.probability for s in build_scenarios(combo(1.0, 0.0, 0.0, 0.0), OptionQuote.zero())) == 1.0
    with pytest.raises(ValueError):
        build_scenarios(combo(1.2, 0.0, 0.0, 0.0), OptionQuote.zero())


@given(probs, probs, st.floats(0.01, 1.0), st.floats(0.01, 1.0), probs)
def test_scenario_probabilities_normalised(ap, am, qp, qm, p_sell):
    sc = build_scenarios(combo(ap, am, qp, qm), OptionQuote(0.0, 0.0, p_sell, 1.0 - p_sell))
    assert math.fsum(s.probability for s in sc) == pytest.approx(1.0, abs=1e-12)
    assert all(s.probability >= 0 for s in sc)
    for s in sc:
        assert s.s_ep_plus <= s.s_cp_plus and s.s_ep_minus <= s.s_cp_minus
        assert s.s_sell + s.s_buy == 1


def test_parse_markets():
    assert parse_markets("BP+DA") == frozenset({"DA", "BP"})
    assert parse_markets("da,id") == frozenset({"DA", "ID"})
    for bad in ("ID+BP", "DA+XX", ""):
        with pytest.raises(ValueError):
            parse_markets(bad)


def test_day_input_validation():
    hour = HourInputs(50.0, 20.0, 50.0, Demands(), quote=OptionQuote.zero())
    with pytest.raises(ValueError):
        DayInputs((hour,) * 3, (CombinationSet((NULL_COMBINATION,)),))
    with pytest.raises(ValueError):
        DayInputs((hour,) * 4, ())
    with pytest.raises(ValueError):
        HourInputs(50.0, 20.0, 50.0, Demands())


def _oracle(day, system):
    """Brute force over combination and tender with independent closed forms per hour."""
    best = None
    for i, c in enumerate(day.combinations[0]):
        for bp in range(day.bp_max + 1):
            total = 0.0
            for hour in day.hours:
                # accepted: the tender is reserved, the rest sells day-ahead if profitable
                margin = max(hour.da_price - hour.mc, 0.0)
                spare = 10.0 - bp
                accepted = bp * c.cp_plus + c.req_prob_plus * bp * (c.ep_plus - hour.mc) + spare * margin
                idle = 10.0 * margin
                total -= c.acc_prob_plus * accepted + (1 - c.acc_prob_plus) * idle
            if best is None or total < best[0] - 1e-9:
                best = (total, i, bp)
    return best


def test_generator_slice_matches_brute_force():
    day, system = generator_slice()
    opex, idx, bp = _oracle(day, system)
    res = optimize_slice(0, day, system)
    assert (res.combination_index, res.bp_plus) == (idx, bp)
    assert res.expected_opex == pytest.approx(opex, abs=1e-6)
    assert res.candidates == pytest.approx((-750.0, -500.0))
    evaluate_schedule(res, day, system)


def test_fixed_tender_matches_solver_per_candidate():
    day, system = generator_slice()
    for i, c in enumerate(day.combinations[0]):
        best = math.inf
        for bp in range(day.bp_max + 1):
            p = build_subproblem(0, c, day, system, "DA+ID+BP")
            p.model.fix(p.bp["plus"], bp)
            best = min(best, solve_mip(p.model).objective)
        assert best == pytest.approx(optimize_slice(0, day, system).candidates[i], abs=1e-6)


def test_bigm_mode_agrees():
    day, system = generator_slice()
    a, b = optimize_slice(0, day, system), optimize_slice(0, day, system, mode="bigm")
    assert (a.combination_index, a.bp_plus) == (b.combination_index, b.bp_plus)
    assert a.expected_opex == pytest.approx(b.expected_opex, abs=1e-6)
    rng = np.random.default_rng(7)
    day, system = random_slice(rng, n_combinations=2, bp_max=2)
    assert optimize_slice(0, day, system, mode="bigm").expected_opex == pytest.approx(
        optimize_slice(0, day, system).expected_opex, abs=1e-6)
    with pytest.raises(ValueError):
        optimize_slice(0, day, system, mode="lagrange")


@pytest.mark.parametrize("x", [0.0, 1.5, 4.0])
def test_intraday_value_is_not_double_counted(x):
    system = single_generator(10.0, 2.5, 20.0)
    session = TradingSession(50.0, 0.0, 8.0, 12, 50.0)
    q = option_values(session)
    hour = HourInputs(50.0, 20.0, 50.0, Demands(el=3.0), session=session)
    day = DayInputs((hour,) * 4, (CombinationSet((NULL_COMBINATION,)),))
    p = build_subproblem(0, None, day, system, "DA+ID")
    for key in p.da_sell:
        p.model.fix(p.da_sell[key], 0.0)
        p.model.fix(p.da_buy[key], 0.0)
        p.model.fix(p.id_buy[key], 0.0)
        p.model.fix(p.id_sell[key], x)
    sol = solve_mip(p.model)
    base = 3.0 * 50.0 * 4
    assert sol.objective == pytest.approx(base - 4 * x * q.opt_sell, abs=1e-6)


@settings(max_examples=6)
@given(st.integers(0, 10_000))
def test_market_subset_dominance(seed):
    day, system = random_slice(np.random.default_rng(seed), n_combinations=2, bp_max=2)
    v = {m: optimize_slice(0, day, system, m).expected_opex for m in ("DA", "DA+ID", "DA+BP", "DA+ID+BP")}
    assert v["DA+ID+BP"] <= min(v["DA+ID"], v["DA+BP"]) + 1e-6
    assert max(v["DA+ID"], v["DA+BP"]) <= v["DA"] + 1e-6


def test_zero_prices_and_demands_cost_nothing():
    hour = HourInputs(0.0, 0.0, 0.0, Demands(), quote=OptionQuote.zero())
    day = DayInputs((hour,) * 4, (CombinationSet((NULL_COMBINATION,)),))
    res = optimize_slice(0, day, tiny_system(0.0))
    assert res.expected_opex == pytest.approx(0.0, abs=1e-9)
    assert (res.bp_plus, res.bp_minus) == (0, 0)


def test_day_is_six_independent_slices():
    rng = np.random.default_rng(11)
    parts = [random_slice(rng, n_combinations=1, bp_max=1) for _ in range(6)]
    system = parts[0][1]
    day = DayInputs(sum((d.hours for d, _ in parts), ()), tuple(d.combinations[0] for d, _ in parts), 1)
    sched = optimize_day(day, system)
    singles = [optimize_slice(0, d, system).expected_opex for d, _ in parts]
    assert sched.expected_opex == pytest.approx(sum(singles), abs=1e-6)
    report = evaluate_schedule(sched, day, system)
    assert report.feasible and report.matches_solver
    assert sum(sched.breakdown.values()) != 0
    with pytest.raises(ValueError):
        optimize_day(parts[0][0], system)


def test_evaluation_flags_perturbed_tender():
    day, system = generator_slice()
    res = optimize_slice(0, day, system)
    broken = type(res)(**{**res.__dict__, "bp_plus": 11})
    report = evaluate_schedule(broken, day, system)
    assert not report.feasible
    assert any("BP+=11" in v for v in report.violations)
    assert any("electricity balance" in v for v in report.violations)
    lying = type(res)(**{**res.__dict__, "expected_opex": res.expected_opex + 1.0})
    with pytest.raises(ConsistencyError):
        evaluate_schedule(lying, day, system)


def test_unservable_site():
    hour = HourInputs(50.0, 20.0, 50.0, Demands(heat=100.0), quote=OptionQuote.zero())
    day = DayInputs((hour,) * 4, (CombinationSet((NULL_COMBINATION,)),))
    with pytest.raises(InfeasibleDispatch, match="heat"):
        optimize_slice(0, day, tiny_system())
    # large electricity demand is bought day-ahead instead
    big = DayInputs((HourInputs(50.0, 20.0, 50.0, Demands(el=30.0), quote=OptionQuote.zero()),) * 4,
                    day.combinations, 0)
    res = optimize_slice(0, big, single_generator(), "DA")
    assert res.expected_opex == pytest.approx(4 * (10 * 50.0 + 20 * 50.0))


def test_schedule_json_is_deterministic(tmp_path):
    day, system = generator_slice()
    full = DayInputs(day.hours * 6, day.combinations * 6, day.bp_max)
    a, b = optimize_day(full, system), optimize_day(full, system)
    assert a.to_json() == b.to_json()
    data = json.loads(a.to_json())
    assert data["expected_opex"] == pytest.approx(-4500.0)
    assert len(data["slices"]) == 6 and data["slices"][0]["BP_plus"] == 10
    a.write_csv(tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0].startswith("hour,slice,a_plus") and len(lines) == 1 + len(a.to_csv_rows())
