"""Intraday flexibility valued as options on a multiperiod binomial lattice.

Each hourly contract's continuous trading session is modelled as an
arithmetic Brownian motion starting at ``s_ini`` and discretised into
``n_steps`` trading opportunities. The sell option pays ``max(S - mc, 0)`` at
gate-closure, the buy option ``max(mc - S, 0)``. Interest is zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import binom, norm

__all__ = [
    "TradingSession",
    "OptionQuote",
    "step_moves",
    "terminal_prices",
    "risk_neutral_weights",
    "option_values",
    "bachelier_limit",
]


@dataclass(frozen=True)
class TradingSession:
    """Intraday market description for one delivery hour.

    Parameters
    ----------
    s_ini : float
        Initial price level in EUR/MWh (usually the day-ahead price).
    mu : float
        Price drift over the whole session in EUR/MWh.
    sigma : float
        Price volatility over the whole session in EUR/MWh.
    n_steps : int
        Number of trading opportunities.
    mc : float
        Marginal electricity cost of the flexible asset in EUR/MWh.
    """

    s_ini: float
    mu: float
    sigma: float
    n_steps: int
    mc: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError(f"n_steps must be a positive integer, got {self.n_steps}")
        # q = -d/(u-d) leaves [0, 1] once the per-step drift beats the step size
        if abs(self.mu) > self.sigma * math.sqrt(self.n_steps) * (1 + 1e-12):
            raise ValueError(
                f"|mu|={abs(self.mu):g} exceeds sigma*sqrt(n_steps)="
                f"{self.sigma * math.sqrt(self.n_steps):g}: no valid risk-neutral measure"
            )

    def replace(self, **changes) -> "TradingSession":
        fields = dict(s_ini=self.s_ini, mu=self.mu, sigma=self.sigma,
                      n_steps=self.n_steps, mc=self.mc)
        fields.update(changes)
        return TradingSession(**fields)


@dataclass(frozen=True)
class OptionQuote:
    """Option values per MWh of blocked capacity and intraday outcome probabilities."""

    opt_sell: float
    opt_buy: float
    p_sell: float
    p_buy: float

    def __post_init__(self):
        for name in ("p_sell", "p_buy"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {p}")
        if self.opt_sell < 0 or self.opt_buy < 0:
            raise ValueError("option values must be nonnegative")

    @classmethod
    def zero(cls, p_sell: float = 0.5) -> "OptionQuote":
        """Quote without option value; only the outcome split is kept."""
        return cls(0.0, 0.0, p_sell, 1.0 - p_sell)


def step_moves(session: TradingSession) -> tuple[float, float]:
    """Return the additive up and down price moves per trading opportunity."""
    drift = session.mu / session.n_steps
    spread = session.sigma * math.sqrt(1.0 / session.n_steps)
    return drift + spread, drift - spread


def terminal_prices(session: TradingSession) -> np.ndarray:
    """Gate-closure prices ``S_k`` for ``k = 0..n_steps`` up-moves (increasing)."""
    u, d = step_moves(session)
    k = np.arange(session.n_steps + 1)
    return session.s_ini + k * u + (session.n_steps - k) * d


def _up_probability(u: float, d: float) -> float:
    return -d / (u - d)


def risk_neutral_weights(session: TradingSession) -> np.ndarray:
    """Risk-neutral probability of ending at each terminal node.

    Uses SciPy's saddle-point binomial mass, which neither overflows nor
    loses accuracy for sessions with thousands of steps.
    """
    u, d = step_moves(session)
    q = min(max(_up_probability(u, d), 0.0), 1.0)
    n = session.n_steps
    return binom.pmf(np.arange(n + 1), n, q)


def option_values(session: TradingSession) -> OptionQuote:
    """Value the sell and buy options of a session and the outcome probabilities.

    The outcome probabilities use the physical terminal law
    ``N(s_ini + mu, sigma**2)``: ``p_sell`` is the chance that the last price
    ends above the marginal cost.
    """
    prices = terminal_prices(session)
    w = risk_neutral_weights(session)
    opt_sell = float(np.dot(w, np.maximum(prices - session.mc, 0.0)))
    opt_buy = float(np.dot(w, np.maximum(session.mc - prices, 0.0)))
    p_sell = float(norm.sf(session.mc, loc=session.s_ini + session.mu, scale=session.sigma))
    return OptionQuote(opt_sell, opt_buy, p_sell, 1.0 - p_sell)


def bachelier_limit(session: TradingSession) -> tuple[float, float]:
    """Closed-form sell/buy values as ``n_steps`` grows without bound."""
    moneyness = session.s_ini - session.mc
    z = moneyness / session.sigma
    sell = moneyness * norm.cdf(z) + session.sigma * norm.pdf(z)
    return float(sell), float(sell - moneyness)
