"""
Valuing intraday flexibility on a binomial lattice
==================================================

A unit with marginal cost ``mc`` can sell in the intraday session whenever
the price ends above ``mc`` and buy back when it ends below. The lattice
prices both rights and converges to the normal-law closed form.
"""

from flexbid.binomial_option import TradingSession, bachelier_limit, option_values
from flexbid.replication import build_hedge_tree, replay_path

# a session opening at 50 EUR/MWh with 10 EUR/MWh volatility, asset cost 55
for n in (2, 8, 32, 128, 512, 2000):
    q = option_values(TradingSession(50.0, 0.0, 10.0, n, 55.0))
    print(f"N={n:5d}  sell {q.opt_sell:.5f}  buy {q.opt_buy:.5f}  P(sell)={q.p_sell:.3f}")

limit_sell, limit_buy = bachelier_limit(TradingSession(50.0, 0.0, 10.0, 1, 55.0))
print(f"closed form   sell {limit_sell:.5f}  buy {limit_buy:.5f}")

# the sell value can be earned by trading the hedge ratios along any path
session = TradingSession(50.0, 0.0, 10.0, 2, 50.0)
tree = build_hedge_tree(session, "sell")
for path in ("uu", "ud", "du", "dd"):
    r = replay_path(tree, session, list(path))
    print(f"path {path}: payoff {r.payoff:8.4f} = value {r.initial_value:.4f} + trading {r.trading_pnl:8.4f}")
