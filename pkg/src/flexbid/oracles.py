"""Brute-force references used by the ``validate`` command and the test suite."""

from __future__ import annotations

import itertools
import math

import numpy as np

from .binomial_option import TradingSession
from .opt_kernel import INTEGER, Model

__all__ = ["random_milp", "enumerate_milp", "random_session"]


def random_milp(rng: np.random.Generator, max_int: int = 8, max_cont: int = 3, max_rows: int = 6) -> Model:
    """Small random MILP with bounded integer ranges and ``<=`` rows.

    Integer ranges shrink to binaries when continuous variables are present
    so that enumeration stays cheap.
    """
    ni = int(rng.integers(1, max_int + 1))
    nc = int(rng.integers(0, max_cont + 1))
    rows = int(rng.integers(1, max_rows + 1))
    n = ni + nc
    A = rng.integers(-5, 6, size=(rows, n)).astype(float)
    b = rng.integers(0, 15, size=rows).astype(float)
    c = rng.integers(-9, 10, size=n).astype(float)
    iub = rng.integers(1, 4, size=ni) if nc == 0 else np.ones(ni, dtype=int)
    m = Model("random")
    xs = [m.add_var(f"z{j}", 0, float(iub[j]), INTEGER) for j in range(ni)]
    xs += [m.add_var(f"y{j}", 0, 5.0) for j in range(nc)]
    for i in range(rows):
        m.add_constr(dict(zip(xs, A[i])), "<=", b[i])
    m.set_objective(dict(zip(xs, c)))
    return m


def _assignments(ranges, chunk=1 << 16):
    """All integer assignments in lexicographic order, in blocks of rows."""
    block = []
    for z in itertools.product(*ranges):
        block.append(z)
        if len(block) == chunk:
            yield np.array(block, dtype=float)
            block = []
    if block:
        yield np.array(block, dtype=float)


def enumerate_milp(model: Model) -> tuple[str, float]:
    """Optimal status and objective by enumerating every integer assignment.

    Continuous variables, if any, are optimised per assignment with the
    HiGHS LP solver from SciPy, which shares no code with the native kernel.
    Assignments whose box bound cannot beat the incumbent skip the LP.
    """
    from scipy.optimize import linprog

    arrays = model.to_arrays()
    ints = np.flatnonzero(arrays.integer)
    conts = np.flatnonzero(~arrays.integer)
    ranges = []
    for j in ints:
        lo, hi = arrays.lb[j], arrays.ub[j]
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise ValueError("enumeration needs bounded integer variables")
        ranges.append(range(int(math.ceil(lo)), int(math.floor(hi)) + 1))
    A = arrays.A
    lo_r, hi_r = arrays.row_lo, arrays.row_hi
    Ai, Ac = A[:, ints], A[:, conts]
    ci, cc = arrays.c[ints], arrays.c[conts]
    lbc, ubc = arrays.lb[conts], arrays.ub[conts]
    # smallest and largest activity the continuous part can add to each row
    act_lo = np.where(Ac > 0, Ac * lbc, Ac * ubc).sum(axis=1)
    act_hi = np.where(Ac > 0, Ac * ubc, Ac * lbc).sum(axis=1)
    box = float(np.where(cc > 0, cc * lbc, cc * ubc).sum()) if len(conts) else 0.0
    ub_rows, lb_rows = np.isfinite(hi_r), np.isfinite(lo_r)
    A_ub = np.vstack([Ac[ub_rows], -Ac[lb_rows]])
    best = math.inf
    for Z in _assignments(ranges):
        fixed = Z @ Ai.T if len(ints) else np.zeros((len(Z), A.shape[0]))
        base = Z @ ci if len(ints) else np.zeros(len(Z))
        ok = np.all(fixed + act_hi >= lo_r - 1e-9, axis=1) & np.all(fixed + act_lo <= hi_r + 1e-9, axis=1)
        if len(conts) == 0:
            if ok.any():
                best = min(best, float(base[ok].min()))
            continue
        for r in np.flatnonzero(ok):
            if base[r] + box >= best - 1e-9:
                continue
            f = fixed[r]
            b_ub = np.concatenate([hi_r[ub_rows] - f[ub_rows], -(lo_r[lb_rows] - f[lb_rows])])
            res = linprog(cc, A_ub=A_ub if len(A_ub) else None, b_ub=b_ub if len(b_ub) else None,
                          bounds=list(zip(lbc, ubc)), method="highs")
            if res.status == 0:
                best = min(best, float(base[r]) + float(res.fun))
    if best == math.inf:
        return "infeasible", math.nan
    return "optimal", best + arrays.constant


def random_session(rng: np.random.Generator, max_steps: int = 12, n_steps: int | None = None) -> TradingSession:
    """Valid random session with drift inside the risk-neutral bound."""
    n = int(rng.integers(1, max_steps + 1)) if n_steps is None else n_steps
    sigma = float(rng.uniform(0.5, 30.0))
    mu = float(rng.uniform(-1.0, 1.0)) * sigma * math.sqrt(n) * 0.99
    s_ini = float(rng.uniform(-20.0, 150.0))
    mc = s_ini + float(rng.normal(0.0, sigma))
    return TradingSession(s_ini, mu, sigma, n, mc)
