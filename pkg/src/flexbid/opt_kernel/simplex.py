"""Dense-tableau bounded-variable simplex.

Every row ``i`` of ``row_lo <= A x <= row_hi`` gets a logical column
``s_i = a_i x`` carrying the row bounds, so the working system is the
homogeneous ``[A  -I] (x, s) = 0`` with box bounds on all columns. Nonbasic
columns rest on a finite bound (or at zero when free).

Cold starts run a two-phase method with artificial columns. Warm starts
resume from a previous basis: with the primal simplex when the basis is
still primal feasible (objective changed), with the dual simplex when it is
still dual feasible (bounds tightened, as in branch and bound).

Pricing is Dantzig's rule; after a run of degenerate pivots the engine
switches to Bland's smallest-index rule until progress resumes.
"""

from __future__ import annotations

import math

import numpy as np

from .model import Basis

__all__ = ["FEAS_TOL", "OPT_TOL", "LPResult", "solve_bounded_lp"]

FEAS_TOL = 1e-7
OPT_TOL = 1e-7
PIVOT_TOL = 1e-9
_FINAL_REFACTOR_AFTER = 25
_REFACTOR_EVERY = 80
_DEGENERATE_RUN = 30

BASIC, AT_LOWER, AT_UPPER, FREE_ZERO = 0, 1, 2, 3


class LPResult:
    __slots__ = ("status", "x", "objective", "basis", "iterations")

    def __init__(self, status, x=None, objective=math.nan, basis=None, iterations=0):
        self.status = status
        self.x = x
        self.objective = objective
        self.basis = basis
        self.iterations = iterations


class _Unbounded(Exception):
    pass


class _Tableau:
    def __init__(self, A_ext, lo, hi, cost, n_struct, max_iter):
        self.A = A_ext
        self.lo = lo
        self.hi = hi
        self.cost = cost
        self.n_struct = n_struct
        self.m, self.ncol = A_ext.shape
        self.max_iter = max_iter
        self.iterations = 0
        self._since_refactor = 0
        self.basis = np.zeros(self.m, dtype=np.int64)
        self.status = np.full(self.ncol, AT_LOWER, dtype=np.int8)
        self.x = np.zeros(self.ncol)
        self.T = None
        self.d = None

    # -- setup --------------------------------------------------------
    def place_nonbasic(self, j, prefer_upper=False):
        lo, hi = self.lo[j], self.hi[j]
        if prefer_upper and math.isfinite(hi):
            self.status[j], self.x[j] = AT_UPPER, hi
        elif math.isfinite(lo):
            self.status[j], self.x[j] = AT_LOWER, lo
        elif math.isfinite(hi):
            self.status[j], self.x[j] = AT_UPPER, hi
        else:
            self.status[j], self.x[j] = FREE_ZERO, 0.0

    def refactor(self, Binv=None):
        if Binv is None:
            Binv = np.linalg.inv(self.A[:, self.basis])
        self.T = Binv @ self.A
        nonbasic = self.status != BASIC
        rhs = -(self.A[:, nonbasic] @ self.x[nonbasic])
        self.x[self.basis] = Binv @ rhs
        self.reprice()
        self._since_refactor = 0

    def reprice(self):
        self.d = self.cost - self.cost[self.basis] @ self.T

    def primal_infeasibility(self):
        xb = self.x[self.basis]
        lo, hi = self.lo[self.basis], self.hi[self.basis]
        return np.maximum(lo - xb, 0.0) + np.maximum(xb - hi, 0.0)

    def is_dual_feasible(self):
        d, st = self.d, self.status
        fixed = self.lo == self.hi
        bad = ((st == AT_LOWER) & (d < -OPT_TOL)) | ((st == AT_UPPER) & (d > OPT_TOL)) \
            | ((st == FREE_ZERO) & (np.abs(d) > OPT_TOL))
        return not np.any(bad & ~fixed)

    # -- pivoting -----------------------------------------------------
    def pivot(self, r, q, leave_status):
        T = self.T
        piv = T[r, q]
        col = T[:, q].copy()
        col[r] = 0.0
        T[r] /= piv
        T -= np.outer(col, T[r])
        self.d -= self.d[q] * T[r]
        leaving = self.basis[r]
        self.basis[r] = q
        self.status[q] = BASIC
        self.status[leaving] = leave_status
        if leave_status == AT_LOWER:
            self.x[leaving] = self.lo[leaving]
        elif leave_status == AT_UPPER:
            self.x[leaving] = self.hi[leaving]
        self.iterations += 1
        self._since_refactor += 1
        if self._since_refactor >= _REFACTOR_EVERY:
            self.refactor()

    def _check_budget(self):
        if self.iterations >= self.max_iter:
            raise RuntimeError(f"simplex iteration limit {self.max_iter} reached")

    # -- primal simplex -----------------------------------------------
    def primal(self):
        """Optimise from a primal feasible basis. Raises ``_Unbounded``."""
        degenerate = 0
        bland = False
        while True:
            self._check_budget()
            d, st = self.d, self.status
            movable = self.lo < self.hi
            gain = np.where(st == AT_LOWER, -d, 0.0)
            gain = np.where(st == AT_UPPER, d, gain)
            gain = np.where(st == FREE_ZERO, np.abs(d), gain)
            gain[~movable | (st == BASIC)] = 0.0
            candidates = np.flatnonzero(gain > OPT_TOL)
            if candidates.size == 0:
                return
            q = int(candidates[0]) if bland else int(candidates[np.argmax(gain[candidates])])
            direction = 1.0 if (st[q] == AT_LOWER or (st[q] == FREE_ZERO and d[q] < 0)) else -1.0
            step, r, leave = self._primal_ratio(q, direction, bland)
            if not math.isfinite(step):
                raise _Unbounded()
            if step <= 1e-12:
                degenerate += 1
                if degenerate >= _DEGENERATE_RUN:
                    bland = True
            else:
                degenerate = 0
                bland = False
            self.x[self.basis] -= direction * step * self.T[:, q]
            self.x[q] += direction * step
            if r < 0:
                # bound flip, no basis change
                self.status[q] = AT_UPPER if direction > 0 else AT_LOWER
                self.x[q] = self.hi[q] if direction > 0 else self.lo[q]
                self.iterations += 1
            else:
                self.pivot(r, q, leave)

    def _primal_ratio(self, q, direction, bland):
        alpha = direction * self.T[:, q]
        xb = self.x[self.basis]
        lo, hi = self.lo[self.basis], self.hi[self.basis]
        with np.errstate(divide="ignore", invalid="ignore"):
            dec = alpha > PIVOT_TOL
            inc = alpha < -PIVOT_TOL
            ratio = np.full(self.m, math.inf)
            ratio[dec] = (xb[dec] - lo[dec]) / alpha[dec]
            ratio[inc] = (hi[inc] - xb[inc]) / -alpha[inc]
        ratio = np.maximum(ratio, 0.0)
        own = self.hi[q] - self.lo[q]
        best = ratio.min() if self.m else math.inf
        if own <= best:
            return own, -1, None
        tie = np.flatnonzero(ratio <= best + 1e-12)
        if bland:
            r = int(tie[np.argmin(self.basis[tie])])
        else:
            r = int(tie[np.argmax(np.abs(alpha[tie]))])
        leave = AT_LOWER if alpha[r] > 0 else AT_UPPER
        return best, r, leave

    # -- dual simplex -------------------------------------------------
    def dual(self):
        """Restore primal feasibility from a dual feasible basis.

        Returns ``False`` when the row selected proves primal infeasibility.
        """
        while True:
            self._check_budget()
            infeas = self.primal_infeasibility()
            r = int(np.argmax(infeas)) if self.m else -1
            if r < 0 or infeas[r] <= FEAS_TOL:
                return True
            leaving = self.basis[r]
            below = self.x[leaving] < self.lo[leaving]
            alpha = self.T[r]
            st = self.status
            movable = (self.lo < self.hi) & (st != BASIC)
            if below:
                elig = ((st == AT_LOWER) & (alpha < -PIVOT_TOL)) | ((st == AT_UPPER) & (alpha > PIVOT_TOL))
            else:
                elig = ((st == AT_LOWER) & (alpha > PIVOT_TOL)) | ((st == AT_UPPER) & (alpha < -PIVOT_TOL))
            elig |= (st == FREE_ZERO) & (np.abs(alpha) > PIVOT_TOL)
            elig &= movable
            cand = np.flatnonzero(elig)
            if cand.size == 0:
                return False
            ratios = np.abs(self.d[cand]) / np.abs(alpha[cand])
            best = ratios.min()
            tie = cand[ratios <= best + 1e-12]
            q = int(tie[np.argmax(np.abs(alpha[tie]))])
            target = self.lo[leaving] if below else self.hi[leaving]
            delta = (self.x[leaving] - target) / alpha[q]
            self.x[self.basis] -= delta * self.T[:, q]
            self.x[q] += delta
            self.pivot(r, q, AT_LOWER if below else AT_UPPER)

    def export_basis(self):
        if np.any(self.basis >= self.n_struct):
            return None
        upper = np.flatnonzero(self.status[: self.n_struct] == AT_UPPER)
        return Basis(tuple(int(b) for b in self.basis), frozenset(int(j) for j in upper))


def _finish(tab, n, c, constant, A):
    # a short pivot run since the last factorisation is accurate enough
    if tab._since_refactor > _FINAL_REFACTOR_AFTER:
        tab.refactor()
    x = tab.x[:n].copy()
    objective = float(c @ x) + constant
    basis = tab.export_basis()
    return LPResult("optimal", x, objective, basis, tab.iterations)


def _warm(A_log, lo, hi, cost, n, basis, max_iter):
    m = A_log.shape[0]
    if len(basis.basic) != m:
        return None
    tab = _Tableau(A_log, lo, hi, cost, n + m, max_iter)
    tab.basis[:] = basis.basic
    for j in range(n + m):
        tab.status[j] = AT_LOWER
    tab.status[tab.basis] = BASIC
    for j in np.flatnonzero(tab.status != BASIC):
        tab.place_nonbasic(j, prefer_upper=j in basis.at_upper)
    try:
        Binv = None
        if m:
            B = A_log[:, tab.basis]
            Binv = np.linalg.inv(B)
            # 1-norm condition estimate; rejects near-singular stale bases
            if np.linalg.norm(B, 1) * np.linalg.norm(Binv, 1) > 1e10:
                return None
        tab.refactor(Binv)
    except np.linalg.LinAlgError:
        return None
    return tab


def solve_bounded_lp(c, constant, A, row_lo, row_hi, lb, ub, warm_start: Basis | None = None,
                     max_iter: int = 50_000) -> LPResult:
    """Minimise ``c x + constant`` subject to ``row_lo <= A x <= row_hi``, ``lb <= x <= ub``.

    Returns an :class:`LPResult` with status ``"optimal"``, ``"infeasible"``
    or ``"unbounded"``.
    """
    m, n = A.shape
    if np.any(lb > ub + FEAS_TOL) or np.any(row_lo > row_hi + FEAS_TOL):
        return LPResult("infeasible")
    A_log = np.hstack([A, -np.eye(m)])
    lo = np.concatenate([lb, row_lo])
    hi = np.concatenate([ub, row_hi])
    cost = np.concatenate([c, np.zeros(m)])

    if warm_start is not None:
        tab = _warm(A_log, lo, hi, cost, n, warm_start, max_iter)
        if tab is not None:
            try:
                if np.all(tab.primal_infeasibility() <= FEAS_TOL):
                    tab.primal()
                    return _finish(tab, n, c, constant, A)
                if tab.is_dual_feasible():
                    if not tab.dual():
                        return LPResult("infeasible", iterations=tab.iterations)
                    tab.primal()
                    return _finish(tab, n, c, constant, A)
            except _Unbounded:
                return LPResult("unbounded", iterations=tab.iterations)

    return _cold(A_log, lo, hi, cost, n, m, c, constant, A, max_iter)


def _cold(A_log, lo, hi, cost, n, m, c, constant, A, max_iter):
    x0 = np.zeros(n + m)
    status0 = np.full(n + m, AT_LOWER, dtype=np.int8)
    probe = _Tableau(A_log, lo, hi, cost, n + m, max_iter)
    for j in range(n):
        probe.place_nonbasic(j)
    x0[:n] = probe.x[:n]
    status0[:n] = probe.status[:n]
    activity = A @ x0[:n]

    art_rows, art_sign = [], []
    basis = np.zeros(m, dtype=np.int64)
    for i in range(m):
        s = n + i
        a = activity[i]
        if lo[s] - FEAS_TOL <= a <= hi[s] + FEAS_TOL:
            basis[i] = s
            status0[s] = BASIC
            x0[s] = a
        else:
            bound = lo[s] if a < lo[s] else hi[s]
            x0[s] = bound
            status0[s] = AT_LOWER if a < lo[s] else AT_UPPER
            art_rows.append(i)
            art_sign.append(1.0 if bound - a > 0 else -1.0)

    k = len(art_rows)
    art = np.zeros((m, k))
    for col, (i, sg) in enumerate(zip(art_rows, art_sign)):
        art[i, col] = sg
    A_ext = np.hstack([A_log, art])
    lo_ext = np.concatenate([lo, np.zeros(k)])
    hi_ext = np.concatenate([hi, np.full(k, math.inf)])
    tab = _Tableau(A_ext, lo_ext, hi_ext, np.concatenate([cost, np.zeros(k)]), n + m, max_iter)
    tab.x[: n + m] = x0
    tab.status[: n + m] = status0
    for col, i in enumerate(art_rows):
        j = n + m + col
        basis[i] = j
        tab.status[j] = BASIC
    tab.basis[:] = basis

    try:
        if k:
            phase1 = np.concatenate([np.zeros(n + m), np.ones(k)])
            tab.cost = phase1
            tab.refactor()
            tab.primal()
            infeasibility = float(tab.x[n + m:].sum())
            if infeasibility > FEAS_TOL * max(1.0, k):
                return LPResult("infeasible", iterations=tab.iterations)
            tab.hi[n + m:] = 0.0
            tab.x[n + m:] = np.where(tab.status[n + m:] == BASIC, tab.x[n + m:], 0.0)
            _drive_out_artificials(tab, n + m)
            tab.cost = np.concatenate([cost, np.zeros(k)])
            tab.reprice()
        else:
            tab.refactor()
        tab.primal()
    except _Unbounded:
        return LPResult("unbounded", iterations=tab.iterations)
    return _finish(tab, n, c, constant, A)


def _drive_out_artificials(tab, n_real):
    for r in range(tab.m):
        if tab.basis[r] < n_real:
            continue
        row = tab.T[r, :n_real].copy()
        row[tab.status[:n_real] == BASIC] = 0.0
        row[tab.lo[:n_real] == tab.hi[:n_real]] *= 1e-3  # prefer movable columns
        q = int(np.argmax(np.abs(row)))
        if abs(row[q]) <= 1e-7:
            continue  # redundant row; artificial stays basic at zero
        delta = (tab.x[tab.basis[r]] - 0.0) / tab.T[r, q]
        tab.x[tab.basis] -= delta * tab.T[:, q]
        tab.x[q] += delta
        tab.pivot(r, q, AT_LOWER)
