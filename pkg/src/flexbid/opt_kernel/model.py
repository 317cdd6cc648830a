"""Linear model container shared by the LP and MILP solvers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Union

import numpy as np

__all__ = [
    "CONTINUOUS", "BINARY", "INTEGER", "LE", "EQ", "GE",
    "Model", "ModelArrays", "Solution", "Basis",
]

CONTINUOUS = "continuous"
BINARY = "binary"
INTEGER = "integer"
LE, EQ, GE = "<=", "==", ">="
_SENSES = {LE, EQ, GE, "<", ">", "="}

Terms = Union[Mapping[int, float], Iterable[tuple[int, float]]]


def _normalize_sense(sense: str) -> str:
    if sense not in _SENSES:
        raise ValueError(f"unknown constraint sense {sense!r}")
    return {"<": LE, ">": GE, "=": EQ}.get(sense, sense)


@dataclass
class ModelArrays:
    """Dense matrix view: ``row_lo <= A x <= row_hi``, ``lb <= x <= ub``."""

    c: np.ndarray
    constant: float
    A: np.ndarray
    row_lo: np.ndarray
    row_hi: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    integer: np.ndarray


@dataclass(frozen=True)
class Basis:
    """Simplex basis over structural plus logical (row) columns.

    Column ``j < n`` is variable ``j``; column ``n + i`` is the activity of row
    ``i``. ``at_upper`` lists nonbasic columns resting on their upper bound.
    """

    basic: tuple[int, ...]
    at_upper: frozenset[int]


@dataclass
class Solution:
    status: str
    objective: float = math.nan
    x: np.ndarray | None = None
    basis: Basis | None = None
    bound: float = math.nan
    gap: float = math.nan
    iterations: int = 0
    nodes: int = 0
    names: list[str] = field(default_factory=list, repr=False)

    @property
    def is_optimal(self) -> bool:
        return self.status == "optimal"

    @property
    def has_solution(self) -> bool:
        return self.x is not None

    def __getitem__(self, var: int) -> float:
        if self.x is None:
            raise KeyError("solution has no primal values")
        return float(self.x[var])

    def as_dict(self) -> dict[str, float]:
        return {name: float(v) for name, v in zip(self.names, self.x)}


class Model:
    """Minimisation model with bounded, optionally integral variables.

    Variables are addressed by the integer index returned from
    :meth:`add_var`. Linear terms are passed as ``{var: coef}`` mappings or
    iterables of ``(var, coef)`` pairs; repeated variables are summed.
    """

    def __init__(self, name: str = "model"):
        self.name = name
        self.var_names: list[str] = []
        self._lb: list[float] = []
        self._ub: list[float] = []
        self._vtype: list[str] = []
        self._rows: list[tuple[dict[int, float], str, float, str]] = []
        self._obj: dict[int, float] = {}
        self.obj_constant = 0.0
        self._cache: tuple[int, np.ndarray] | None = None
        self._version = 0

    # -- construction -------------------------------------------------
    @property
    def num_vars(self) -> int:
        return len(self.var_names)

    @property
    def num_constrs(self) -> int:
        return len(self._rows)

    def add_var(self, name: str | None = None, lb: float = 0.0,
                ub: float = math.inf, vtype: str = CONTINUOUS) -> int:
        if vtype not in (CONTINUOUS, BINARY, INTEGER):
            raise ValueError(f"unknown variable type {vtype!r}")
        if vtype == BINARY:
            lb, ub = max(lb, 0.0), min(ub, 1.0)
        if lb > ub:
            raise ValueError(f"variable {name!r}: lower bound {lb} above upper bound {ub}")
        idx = self.num_vars
        self.var_names.append(name if name is not None else f"x{idx}")
        self._lb.append(float(lb))
        self._ub.append(float(ub))
        self._vtype.append(vtype)
        self._version += 1
        return idx

    def _terms(self, terms: Terms) -> dict[int, float]:
        items = terms.items() if isinstance(terms, Mapping) else terms
        out: dict[int, float] = {}
        for var, coef in items:
            if not 0 <= var < self.num_vars:
                raise IndexError(f"unknown variable index {var}")
            out[var] = out.get(var, 0.0) + float(coef)
        return {v: c for v, c in out.items() if c != 0.0}

    def add_constr(self, terms: Terms, sense: str, rhs: float, name: str | None = None) -> int:
        row = self._terms(terms)
        self._rows.append((row, _normalize_sense(sense), float(rhs),
                           name if name is not None else f"c{self.num_constrs}"))
        self._version += 1
        return self.num_constrs - 1

    def set_objective(self, terms: Terms, constant: float = 0.0) -> None:
        self._obj = self._terms(terms)
        self.obj_constant = float(constant)

    def set_bounds(self, var: int, lb: float | None = None, ub: float | None = None) -> None:
        if lb is not None:
            self._lb[var] = float(lb)
        if ub is not None:
            self._ub[var] = float(ub)
        if self._lb[var] > self._ub[var]:
            raise ValueError(f"variable {self.var_names[var]!r}: empty bound interval")

    def fix(self, var: int, value: float) -> None:
        self._lb[var] = self._ub[var] = float(value)

    def bounds(self, var: int) -> tuple[float, float]:
        return self._lb[var], self._ub[var]

    def vtype(self, var: int) -> str:
        return self._vtype[var]

    @property
    def objective(self) -> dict[int, float]:
        return dict(self._obj)

    @property
    def constraints(self):
        """Rows as ``(terms, sense, rhs, name)`` tuples."""
        return list(self._rows)

    def copy(self) -> "Model":
        other = Model(self.name)
        other.var_names = list(self.var_names)
        other._lb, other._ub, other._vtype = list(self._lb), list(self._ub), list(self._vtype)
        other._rows = [(dict(r), s, b, n) for r, s, b, n in self._rows]
        other._obj = dict(self._obj)
        other.obj_constant = self.obj_constant
        return other

    # -- views -------------------------------------------------------
    def _matrix(self) -> np.ndarray:
        if self._cache is not None and self._cache[0] == self._version:
            return self._cache[1]
        A = np.zeros((self.num_constrs, self.num_vars))
        for i, (row, _, _, _) in enumerate(self._rows):
            if row:
                A[i, list(row.keys())] = list(row.values())
        self._cache = (self._version, A)
        return A

    def to_arrays(self) -> ModelArrays:
        m = self.num_constrs
        row_lo = np.full(m, -math.inf)
        row_hi = np.full(m, math.inf)
        for i, (_, sense, rhs, _) in enumerate(self._rows):
            if sense in (LE, EQ):
                row_hi[i] = rhs
            if sense in (GE, EQ):
                row_lo[i] = rhs
        c = np.zeros(self.num_vars)
        if self._obj:
            c[list(self._obj.keys())] = list(self._obj.values())
        integer = np.array([t != CONTINUOUS for t in self._vtype], dtype=bool)
        return ModelArrays(c, self.obj_constant, self._matrix(), row_lo, row_hi,
                           np.array(self._lb, dtype=float), np.array(self._ub, dtype=float),
                           integer)

    # -- checks ------------------------------------------------------
    def objective_value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(sum(c * x[v] for v, c in self._obj.items()) + self.obj_constant)

    def violations(self, x, tol: float = 1e-7, int_tol: float = 1e-6) -> list[str]:
        """Human-readable list of bound, row and integrality violations of ``x``."""
        x = np.asarray(x, dtype=float)
        out = []
        for j in range(self.num_vars):
            if x[j] < self._lb[j] - tol or x[j] > self._ub[j] + tol:
                out.append(f"{self.var_names[j]}={x[j]:g} outside [{self._lb[j]:g}, {self._ub[j]:g}]")
            if self._vtype[j] != CONTINUOUS and abs(x[j] - round(x[j])) > int_tol:
                out.append(f"{self.var_names[j]}={x[j]:g} not integral")
        for row, sense, rhs, name in self._rows:
            act = sum(c * x[v] for v, c in row.items())
            scale = tol * max(1.0, abs(rhs))
            if (sense == LE and act > rhs + scale) or (sense == GE and act < rhs - scale) \
                    or (sense == EQ and abs(act - rhs) > scale):
                out.append(f"{name}: {act:g} {sense} {rhs:g} violated")
        return out
