"""Asset-backed trading strategy that replicates the intraday option value.

Backward induction on the binomial lattice gives the node values and the
share ``y`` of flexible capacity held sold (sell side) or bought (buy side)
between two trading opportunities. Replaying any price path with these
positions turns the initial option value into the terminal payoff exactly.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .binomial_option import TradingSession, step_moves, terminal_prices

__all__ = [
    "SIDES",
    "HedgeTree",
    "PathResult",
    "build_hedge_tree",
    "replay_path",
    "validate_replication",
    "MAX_EXHAUSTIVE_STEPS",
]

SIDES = ("sell", "buy")
MAX_EXHAUSTIVE_STEPS = 16


@dataclass(frozen=True)
class HedgeTree:
    """Node values and hedge ratios for one side of a session.

    ``values[i][k]`` is the option value after ``i`` trading opportunities
    with ``k`` up-moves; ``ratios[i][k]`` the capacity share held over the
    following step.
    """

    side: str
    values: tuple[np.ndarray, ...]
    ratios: tuple[np.ndarray, ...]
    up: float
    down: float

    @property
    def n_steps(self) -> int:
        return len(self.ratios)

    @property
    def root_value(self) -> float:
        return float(self.values[0][0])


@dataclass(frozen=True)
class PathResult:
    payoff: float
    trading_pnl: float
    final_position: int
    initial_value: float

    @property
    def error(self) -> float:
        """Replication error ``initial_value + trading_pnl - payoff``."""
        return self.initial_value + self.trading_pnl - self.payoff


def _payoff(side: str, prices: np.ndarray, mc: float) -> np.ndarray:
    if side == "sell":
        return np.maximum(prices - mc, 0.0)
    if side == "buy":
        return np.maximum(mc - prices, 0.0)
    raise ValueError(f"side must be 'sell' or 'buy', got {side!r}")


def _delta_ratio(side, v_up, v_down, u, d):
    if side == "sell":
        return (v_up - v_down) / (u - d)
    return (v_down - v_up) / (u - d)


def build_hedge_tree(session: TradingSession, side: str,
                     ratio_rule: Callable = _delta_ratio) -> HedgeTree:
    """Backward induction for ``side`` in ``{"sell", "buy"}``.

    ``ratio_rule(side, v_up, v_down, u, d)`` computes the hedge positions
    from the two successor values; it is exposed so a faulty rule can be
    injected to check that the validation harness notices.
    """
    u, d = step_moves(session)
    q = -d / (u - d)
    n = session.n_steps
    v = _payoff(side, terminal_prices(session), session.mc)
    values = [v]
    ratios = []
    for _ in range(n):
        v_up, v_down = v[1:], v[:-1]
        ratios.append(np.asarray(ratio_rule(side, v_up, v_down, u, d), dtype=float))
        v = q * v_up + (1.0 - q) * v_down
        values.append(v)
    values.reverse()
    ratios.reverse()
    return HedgeTree(side, tuple(values), tuple(ratios), u, d)


def _as_ups(path: Sequence) -> np.ndarray:
    ups = []
    for step in path:
        if isinstance(step, str):
            if step not in ("u", "up", "d", "down"):
                raise ValueError(f"unknown path step {step!r}")
            ups.append(step in ("u", "up"))
        else:
            ups.append(bool(step))
    return np.asarray(ups, dtype=bool)


def replay_path(tree: HedgeTree, session: TradingSession, path: Sequence) -> PathResult:
    """Trade along one price path and report payoff against trading P&L.

    ``path`` holds one entry per trading opportunity: ``"u"``/``"d"`` (or
    ``"up"``/``"down"``) or truthy/falsy values for up/down.
    """
    ups = _as_ups(path)
    if len(ups) != tree.n_steps:
        raise ValueError(f"path has {len(ups)} steps, tree has {tree.n_steps}")
    sign = 1.0 if tree.side == "sell" else -1.0
    k = 0
    pnl = 0.0
    for i, up in enumerate(ups):
        move = tree.up if up else tree.down
        pnl += sign * tree.ratios[i][k] * move
        k += int(up)
    price = session.s_ini + k * tree.up + (tree.n_steps - k) * tree.down
    payoff = float(_payoff(tree.side, np.array([price]), session.mc)[0])
    # exercised iff the terminal payoff is positive; at-the-money counts as not held
    final_position = int(payoff > 0.0)
    return PathResult(payoff, pnl, final_position, tree.root_value)


def _replay_many(tree: HedgeTree, session: TradingSession, ups: np.ndarray) -> np.ndarray:
    """Vectorised replay of a boolean ``(paths, n_steps)`` matrix; returns errors."""
    sign = 1.0 if tree.side == "sell" else -1.0
    n_paths = ups.shape[0]
    k = np.zeros(n_paths, dtype=np.int64)
    pnl = np.zeros(n_paths)
    for i in range(tree.n_steps):
        move = np.where(ups[:, i], tree.up, tree.down)
        pnl += sign * tree.ratios[i][k] * move
        k += ups[:, i]
    prices = session.s_ini + k * tree.up + (tree.n_steps - k) * tree.down
    payoff = _payoff(tree.side, prices, session.mc)
    return np.abs(tree.root_value + pnl - payoff)


def validate_replication(session: TradingSession, mode: str = "exhaustive",
                         n_samples: int = 1000, seed: int = 0,
                         sides: Sequence[str] = SIDES,
                         ratio_rule: Callable = _delta_ratio) -> float:
    """Maximum replication error over replayed paths and both option sides.

    ``mode="exhaustive"`` replays all ``2**n_steps`` paths and is limited to
    ``n_steps <= 16``; ``mode="sampled"`` draws ``n_samples`` paths with a
    seeded generator.
    """
    n = session.n_steps
    if mode == "exhaustive":
        if n > MAX_EXHAUSTIVE_STEPS:
            raise ValueError(
                f"exhaustive replay needs n_steps <= {MAX_EXHAUSTIVE_STEPS}, got {n}")
        ups = np.array(list(itertools.product((False, True), repeat=n)), dtype=bool)
    elif mode == "sampled":
        rng = np.random.default_rng(seed)
        ups = rng.random((n_samples, n)) < 0.5
    else:
        raise ValueError(f"mode must be 'exhaustive' or 'sampled', got {mode!r}")
    worst = 0.0
    for side in sides:
        tree = build_hedge_tree(session, side, ratio_rule=ratio_rule)
        worst = max(worst, float(_replay_many(tree, session, ups).max()))
    return worst
