"""Plain-text dump of a :class:`Model` for debugging.

Grammar (one item per line, ``#`` starts a comment)::

    minimize
      obj: <coef> <name> + <coef> <name> ... + <constant>
    subject to
      <row name>: <coef> <name> + ... <sense> <rhs>
    bounds
      <lb> <= <name> <= <ub>
    integers
      <name> ...
    end

``<sense>`` is one of ``<=``, ``>=``, ``=``; infinite bounds print as
``-inf``/``inf``.
"""

from __future__ import annotations

import io

from .model import CONTINUOUS, EQ, Model


def _expr(model: Model, terms: dict[int, float]) -> str:
    if not terms:
        return "0"
    parts = []
    for var, coef in sorted(terms.items()):
        sign = "-" if coef < 0 else "+"
        parts.append(f"{sign} {abs(coef):.12g} {model.var_names[var]}")
    text = " ".join(parts)
    return text[2:] if text.startswith("+ ") else text


def dumps(model: Model) -> str:
    out = io.StringIO()
    out.write(f"# {model.name}\nminimize\n  obj: {_expr(model, model.objective)}")
    if model.obj_constant:
        out.write(f" + {model.obj_constant:.12g}")
    out.write("\nsubject to\n")
    for terms, sense, rhs, name in model.constraints:
        op = "=" if sense == EQ else sense
        out.write(f"  {name}: {_expr(model, terms)} {op} {rhs:.12g}\n")
    out.write("bounds\n")
    for j, name in enumerate(model.var_names):
        lb, ub = model.bounds(j)
        out.write(f"  {lb:.12g} <= {name} <= {ub:.12g}\n")
    ints = [n for j, n in enumerate(model.var_names) if model.vtype(j) != CONTINUOUS]
    if ints:
        out.write("integers\n  " + " ".join(ints) + "\n")
    out.write("end\n")
    return out.getvalue()


def write_lp(model: Model, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(model))
