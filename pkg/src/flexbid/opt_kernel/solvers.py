"""LP and MILP entry points over :class:`~flexbid.opt_kernel.model.Model`."""

from __future__ import annotations

import heapq
import itertools
import math
import time

import numpy as np

from .model import Basis, Model, ModelArrays, Solution
from .simplex import FEAS_TOL, solve_bounded_lp

__all__ = ["solve_lp", "solve_mip", "INT_TOL", "COARSE_REL_GAP", "BACKENDS"]

INT_TOL = 1e-6
# coarse preset for long runs; the default absolute gap of 1e-6 keeps oracle checks exact
COARSE_REL_GAP = 0.01
BACKENDS = ("native", "highs")


def _lp(arrays: ModelArrays, lb=None, ub=None, warm_start=None):
    return solve_bounded_lp(arrays.c, arrays.constant, arrays.A, arrays.row_lo, arrays.row_hi,
                            arrays.lb if lb is None else lb, arrays.ub if ub is None else ub,
                            warm_start=warm_start)


def solve_lp(model: Model, warm_start: Basis | None = None) -> Solution:
    """Solve the continuous relaxation of ``model``.

    Integrality marks are ignored. Infeasible and unbounded models are
    reported through ``Solution.status``; no exception is raised.
    """
    arrays = model.to_arrays()
    res = _lp(arrays, warm_start=warm_start)
    sol = Solution(res.status, iterations=res.iterations, names=model.var_names)
    if res.status == "optimal":
        sol.objective = res.objective
        sol.bound = res.objective
        sol.gap = 0.0
        sol.x = res.x
        sol.basis = res.basis
    return sol


def _rows_ok(arrays: ModelArrays, x, tol=FEAS_TOL) -> bool:
    act = arrays.A @ x
    scale = tol * np.maximum(1.0, np.abs(act))
    return bool(np.all(act >= arrays.row_lo - scale) and np.all(act <= arrays.row_hi + scale))


def _simple_rounding(arrays: ModelArrays, x, frac_idx, lb, ub):
    """Round fractional integers one by one while every touched row stays feasible."""
    x = x.copy()
    act = arrays.A @ x
    A = arrays.A
    for j in frac_idx:
        lo_v, hi_v = math.floor(x[j]), math.ceil(x[j])
        order = (lo_v, hi_v) if arrays.c[j] >= 0 else (hi_v, lo_v)
        for v in order:
            if v < lb[j] - FEAS_TOL or v > ub[j] + FEAS_TOL:
                continue
            new_act = act + A[:, j] * (v - x[j])
            scale = FEAS_TOL * np.maximum(1.0, np.abs(new_act))
            if np.all(new_act >= arrays.row_lo - scale) and np.all(new_act <= arrays.row_hi + scale):
                act = new_act
                x[j] = v
                break
        else:
            return None
    return x


def _polish(arrays: ModelArrays, x, lb, ub, basis=None):
    """Fix integers at their rounded values and re-optimise the continuous part."""
    lb2, ub2 = lb.copy(), ub.copy()
    ints = np.flatnonzero(arrays.integer)
    vals = np.round(x[ints])
    lb2[ints] = vals
    ub2[ints] = vals
    res = _lp(arrays, lb2, ub2, basis)
    if res.status != "optimal":
        return None
    out = res.x.copy()
    out[ints] = vals
    return out


def _most_fractional(x, integer_idx):
    frac = x[integer_idx] - np.floor(x[integer_idx])
    dist = np.minimum(frac, 1.0 - frac)
    mask = dist > INT_TOL
    if not np.any(mask):
        return -1, np.array([], dtype=np.int64)
    cand = integer_idx[mask]
    score = np.abs(frac[mask] - 0.5)
    # most fractional first, lowest index on ties (argmin returns the first)
    return int(cand[np.argmin(score)]), cand


def solve_mip(model: Model, abs_gap: float = 1e-6, time_limit: float | None = None,
              rel_gap: float = 0.0, backend: str = "native", start=None,
              warm_start: Basis | None = None, node_limit: int | None = None,
              cutoff: float | None = None) -> Solution:
    """Branch and bound over LP relaxations.

    Nodes are explored best-bound first; the branching variable is the most
    fractional integer, ties going to the lowest index. The search stops once
    the incumbent is within ``abs_gap`` (or ``rel_gap`` relative) of the best
    open bound, or when ``time_limit`` seconds have elapsed.

    ``start`` is an optional full assignment used as initial incumbent when
    feasible; ``warm_start`` a root basis passed to the simplex. With
    ``cutoff`` only solutions below that objective are searched for; if none
    exists the status is ``"cutoff"``.

    Status is ``"optimal"``, ``"infeasible"`` (proven), ``"unbounded"``,
    ``"time_limit"`` (incumbent returned with its gap) or ``"unknown"`` (limit
    reached without any incumbent).
    """
    if backend == "highs":
        return _solve_highs(model, rel_gap, abs_gap, time_limit)
    if backend != "native":
        raise ValueError(f"unknown backend {backend!r}; choose from {BACKENDS}")

    t0 = time.perf_counter()
    arrays = model.to_arrays()
    integer_idx = np.flatnonzero(arrays.integer)
    lb0 = arrays.lb.copy()
    ub0 = arrays.ub.copy()
    lb0[integer_idx] = np.ceil(lb0[integer_idx] - INT_TOL)
    ub0[integer_idx] = np.floor(ub0[integer_idx] + INT_TOL)
    names = model.var_names

    root = _lp(arrays, lb0, ub0, warm_start)
    iterations = root.iterations
    if root.status != "optimal":
        return Solution(root.status, iterations=iterations, names=names)

    incumbent, best = None, math.inf if cutoff is None else float(cutoff)
    if start is not None:
        xs = np.asarray(start, dtype=float)
        if (xs.shape == (arrays.c.size,) and np.all(xs >= lb0 - FEAS_TOL) and np.all(xs <= ub0 + FEAS_TOL)
                and np.all(np.abs(xs[integer_idx] - np.round(xs[integer_idx])) <= INT_TOL)
                and _rows_ok(arrays, xs)):
            val = float(arrays.c @ xs) + arrays.constant
            if val < best:
                incumbent, best = xs.copy(), val

    def close_enough(bound):
        tol = max(abs_gap, rel_gap * abs(best)) if math.isfinite(best) else -math.inf
        return bound >= best - tol

    def offer(x, basis):
        nonlocal incumbent, best
        if float(arrays.c @ x) + arrays.constant >= best - 1e-12:
            return
        xp = _polish(arrays, x, lb0, ub0, basis)
        if xp is None:
            return
        val = float(arrays.c @ xp) + arrays.constant
        if val < best - 1e-12:
            incumbent, best = xp, val

    counter = itertools.count()
    heap = [(root.objective, next(counter), lb0, ub0, root)]
    nodes = 0
    root_basis = root.basis
    status = "optimal"
    while heap:
        bound, _, lb, ub, res = heap[0]
        if close_enough(bound):
            break
        if time_limit is not None and time.perf_counter() - t0 > time_limit:
            status = "time_limit"
            break
        if node_limit is not None and nodes >= node_limit:
            status = "time_limit"
            break
        heapq.heappop(heap)
        nodes += 1
        j, frac = _most_fractional(res.x, integer_idx)
        if j < 0:
            offer(res.x, res.basis)
            continue
        rounded = _simple_rounding(arrays, res.x, frac, lb, ub)
        if rounded is not None:
            offer(rounded, res.basis)
            if close_enough(bound):
                continue
        v = res.x[j]
        for side in ("down", "up"):
            lb_c, ub_c = lb.copy(), ub.copy()
            if side == "down":
                ub_c[j] = math.floor(v)
            else:
                lb_c[j] = math.ceil(v)
            child = _lp(arrays, lb_c, ub_c, res.basis)
            iterations += child.iterations
            if child.status == "optimal" and not close_enough(child.objective):
                heapq.heappush(heap, (child.objective, next(counter), lb_c, ub_c, child))
            elif child.status == "unbounded":
                return Solution("unbounded", iterations=iterations, nodes=nodes, names=names)

    open_bound = min((h[0] for h in heap), default=math.inf)
    if incumbent is None:
        if status == "time_limit":
            status = "unknown"
        elif cutoff is not None:
            status = "cutoff"
        else:
            status = "infeasible"
        return Solution(status, bound=open_bound, iterations=iterations, nodes=nodes, names=names)
    bound = min(open_bound, best)
    x = incumbent.copy()
    x[integer_idx] = np.round(x[integer_idx])
    return Solution(status, objective=best, x=x, basis=root_basis, bound=bound,
                    gap=best - bound, iterations=iterations, nodes=nodes, names=names)


def _solve_highs(model: Model, rel_gap, abs_gap, time_limit) -> Solution:
    from scipy.optimize import Bounds, LinearConstraint, milp

    arrays = model.to_arrays()
    options = {"mip_rel_gap": rel_gap, "disp": False}
    if time_limit is not None:
        options["time_limit"] = time_limit
    constraints = []
    if arrays.A.shape[0]:
        constraints.append(LinearConstraint(arrays.A, arrays.row_lo, arrays.row_hi))
    res = milp(arrays.c, integrality=arrays.integer.astype(int), bounds=Bounds(arrays.lb, arrays.ub),
               constraints=constraints, options=options)
    names = model.var_names
    if res.status == 2:
        return Solution("infeasible", names=names)
    if res.status == 3:
        return Solution("unbounded", names=names)
    if res.x is None:
        return Solution("unknown", names=names)
    x = res.x.copy()
    ints = np.flatnonzero(arrays.integer)
    x[ints] = np.round(x[ints])
    obj = float(arrays.c @ x) + arrays.constant
    status = "optimal" if res.status == 0 else "time_limit"
    bound = getattr(res, "mip_dual_bound", None)
    bound = obj if bound is None else float(bound) + arrays.constant
    return Solution(status, objective=obj, x=x, bound=bound, gap=obj - bound, names=names)
