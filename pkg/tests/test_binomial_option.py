import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import norm

from flexbid.binomial_option import (OptionQuote, TradingSession, bachelier_limit, option_values,
                                     risk_neutral_weights, step_moves, terminal_prices)


@st.composite
def sessions(draw, max_steps=40):
    n = draw(st.integers(1, max_steps))
    sigma = draw(st.floats(0.1, 50.0))
    frac = draw(st.floats(-0.999, 0.999))
    s_ini = draw(st.floats(-50.0, 200.0))
    mc = draw(st.floats(-50.0, 200.0))
    return TradingSession(s_ini, frac * sigma * math.sqrt(n), sigma, n, mc)


def enumerate_lattice(s):
    """Reference value by walking all 2**n paths with exact integer counting."""
    u, d = step_moves(s)
    q = -d / (u - d)
    sell = buy = 0.0
    for k in range(s.n_steps + 1):
        w = math.comb(s.n_steps, k) * q**k * (1 - q) ** (s.n_steps - k)
        price = s.s_ini + k * u + (s.n_steps - k) * d
        sell += w * max(price - s.mc, 0.0)
        buy += w * max(s.mc - price, 0.0)
    return sell, buy


def test_step_moves_examples():
    u, d = step_moves(TradingSession(50, 0, 10, 2, 50))
    assert u == pytest.approx(7.07107, abs=1e-5) and d == pytest.approx(-7.07107, abs=1e-5)
    assert step_moves(TradingSession(50, 2, 10, 1, 50)) == pytest.approx((12, -8))
    assert step_moves(TradingSession(0, 0, 5, 1, 0)) == pytest.approx((5, -5))


@pytest.mark.parametrize("kwargs", [dict(sigma=0.0), dict(sigma=-1.0), dict(mu=10.1), dict(n_steps=0),
                                    dict(n_steps=2.5)])
def test_session_rejects_invalid(kwargs):
    base = dict(s_ini=50, mu=0, sigma=10, n_steps=1, mc=50)
    with pytest.raises(ValueError):
        TradingSession(**{**base, **kwargs})


def test_drift_at_bound_is_accepted():
    s = TradingSession(50, 10 * math.sqrt(4), 10, 4, 50)
    u, d = step_moves(s)
    assert d == pytest.approx(0.0, abs=1e-12) and u > 0


def test_terminal_prices_examples():
    np.testing.assert_allclose(terminal_prices(TradingSession(50, 0, 10, 2, 0)), [35.8579, 50, 64.1421], atol=1e-4)
    np.testing.assert_allclose(terminal_prices(TradingSession(50, 2, 10, 1, 0)), [42, 62])


@given(sessions())
def test_terminal_prices_span_and_order(s):
    p = terminal_prices(s)
    assert len(p) == s.n_steps + 1
    assert np.all(np.diff(p) > 0)
    assert p[-1] - p[0] == pytest.approx(2 * s.sigma * math.sqrt(s.n_steps), rel=1e-9)


def test_option_values_examples():
    q = option_values(TradingSession(50, 0, 10, 2, 50))
    assert (q.opt_sell, q.opt_buy, q.p_sell) == pytest.approx((3.53553, 3.53553, 0.5), abs=1e-5)
    q = option_values(TradingSession(50, 2, 10, 1, 50))
    assert (q.opt_sell, q.opt_buy) == pytest.approx((4.8, 4.8))
    q = option_values(TradingSession(50, 0, 1, 4, 0))
    assert (q.opt_sell, q.opt_buy) == pytest.approx((50, 0), abs=1e-12)


def test_p_sell_uses_drifted_normal_law():
    s = TradingSession(40, 3, 8, 10, 45)
    assert option_values(s).p_sell == pytest.approx(1 - norm.cdf(45, 43, 8), abs=1e-15)


@given(sessions(max_steps=30))
def test_matches_exact_enumeration(s):
    sell, buy = enumerate_lattice(s)
    q = option_values(s)
    assert q.opt_sell == pytest.approx(sell, rel=1e-9, abs=1e-9)
    assert q.opt_buy == pytest.approx(buy, rel=1e-9, abs=1e-9)


@given(sessions(max_steps=200))
def test_parity_normalisation_and_bounds(s):
    q = option_values(s)
    assert q.opt_sell - q.opt_buy == pytest.approx(s.s_ini - s.mc, abs=1e-9 * max(1, abs(s.s_ini - s.mc)))
    assert q.p_sell + q.p_buy == pytest.approx(1.0, abs=1e-15)
    assert q.opt_sell >= max(s.s_ini - s.mc, 0.0) - 1e-9
    assert q.opt_buy >= max(s.mc - s.s_ini, 0.0) - 1e-9


@given(sessions(), st.floats(1.0, 5.0))
def test_monotone_in_sigma_at_zero_drift(s, factor):
    s = s.replace(mu=0.0)
    bigger = s.replace(sigma=s.sigma * factor)
    assert option_values(bigger).opt_sell >= option_values(s).opt_sell - 1e-12


@given(sessions(), st.floats(0.0, 30.0))
def test_monotone_in_marginal_cost(s, shift):
    lo, hi = option_values(s), option_values(s.replace(mc=s.mc + shift))
    assert hi.opt_sell <= lo.opt_sell + 1e-12
    assert hi.opt_buy >= lo.opt_buy - 1e-12


def test_weights_sum_to_one_without_overflow():
    w = risk_neutral_weights(TradingSession(50, 5, 10, 5000, 50))
    assert np.all(np.isfinite(w)) and w.sum() == pytest.approx(1.0, abs=1e-12)


def test_bachelier_examples():
    assert bachelier_limit(TradingSession(50, 0, 10, 1, 55))[0] == pytest.approx(1.9780, abs=1e-4)
    assert bachelier_limit(TradingSession(50, 0, 10, 1, 50))[0] == pytest.approx(10 * norm.pdf(0), abs=1e-12)
    sell, buy = bachelier_limit(TradingSession(50, 0, 10, 1, -1e4))
    assert sell == pytest.approx(1e4 + 50, rel=1e-12) and buy == pytest.approx(0.0, abs=1e-9)


@pytest.mark.parametrize("moneyness", [-20.0, -7.5, 0.0, 3.0, 20.0])
def test_converges_to_bachelier(moneyness):
    s = TradingSession(50, 0, 10, 2000, 50 - moneyness)
    assert abs(option_values(s).opt_sell - bachelier_limit(s)[0]) <= 1e-3 * s.sigma


def test_quote_validation():
    with pytest.raises(ValueError):
        OptionQuote(-1.0, 0.0, 0.5, 0.5)
    with pytest.raises(ValueError):
        OptionQuote(0.0, 0.0, 1.2, -0.2)
    assert OptionQuote.zero(0.3).p_buy == pytest.approx(0.7)
