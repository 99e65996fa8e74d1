"""Closed-form coefficient terms: constants, trig waves, sums and products.

Coefficients are built from this small term library instead of arbitrary
callables so that 1-periodicity is exact by construction (integer wave
numbers only), sup/Lipschitz bounds can be derived symbolically, and every
problem instance round-trips through a JSON config.

Terms may reference the slow spatial variable ``x`` and, for two-scale
problems, the fast variable ``y``.  One-scale coefficients use ``x`` only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

VARS = ("x", "y")
TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Trig:
    """amp * sin/cos(2*pi*freq * v[axis]); freq a positive integer."""

    kind: str  # "sin" | "cos"
    var: str = "x"
    axis: int = 0
    freq: int = 1
    amp: float = 1.0

    def __post_init__(self):
        if self.kind not in ("sin", "cos"):
            raise ValueError(f"unknown trig kind {self.kind!r}")
        if self.var not in VARS:
            raise ValueError(f"unknown variable {self.var!r}")
        if int(self.freq) != self.freq or self.freq < 1:
            raise ValueError("freq must be a positive integer (keeps terms 1-periodic)")


@dataclass(frozen=True)
class Sum:
    terms: tuple


@dataclass(frozen=True)
class Prod:
    factors: tuple


Expr = Const | Trig | Sum | Prod


def const(c: float) -> Const:
    return Const(float(c))


def sin_x(freq: int = 1, amp: float = 1.0, axis: int = 0) -> Trig:
    return Trig("sin", "x", axis, freq, amp)


def cos_x(freq: int = 1, amp: float = 1.0, axis: int = 0) -> Trig:
    return Trig("cos", "x", axis, freq, amp)


def sin_y(freq: int = 1, amp: float = 1.0, axis: int = 0) -> Trig:
    return Trig("sin", "y", axis, freq, amp)


def cos_y(freq: int = 1, amp: float = 1.0, axis: int = 0) -> Trig:
    return Trig("cos", "y", axis, freq, amp)


def add(*terms) -> Sum:
    return Sum(tuple(_as_expr(t) for t in terms))


def mul(*factors) -> Prod:
    return Prod(tuple(_as_expr(f) for f in factors))


def scale(c: float, e: Expr) -> Expr:
    return Prod((Const(float(c)), _as_expr(e)))


def _as_expr(obj) -> Expr:
    if isinstance(obj, (Const, Trig, Sum, Prod)):
        return obj
    if isinstance(obj, (int, float)):
        return Const(float(obj))
    raise TypeError(f"cannot coerce {obj!r} to a coefficient term")


def evaluate(expr: Expr, x: np.ndarray, y: np.ndarray | None = None) -> np.ndarray:
    """Evaluate at points x (..., dim) and optionally y (..., dim), broadcasting.

    Returns an array of the broadcast shape without the trailing dim axis.
    """
    if isinstance(expr, Const):
        shape = np.broadcast_shapes(
            np.shape(x)[:-1], np.shape(y)[:-1] if y is not None else ()
        )
        return np.full(shape, expr.value)
    if isinstance(expr, Trig):
        if expr.var == "y":
            if y is None:
                raise ValueError("term references fast variable y but no y given")
            v = np.asarray(y)[..., expr.axis]
        else:
            v = np.asarray(x)[..., expr.axis]
        fn = np.sin if expr.kind == "sin" else np.cos
        out = expr.amp * fn(TWO_PI * expr.freq * v)
        shape = np.broadcast_shapes(
            np.shape(x)[:-1], np.shape(y)[:-1] if y is not None else ()
        )
        return np.broadcast_to(out, shape).copy() if out.shape != shape else out
    if isinstance(expr, Sum):
        return sum(evaluate(t, x, y) for t in expr.terms)
    if isinstance(expr, Prod):
        out = None
        for f in expr.factors:
            val = evaluate(f, x, y)
            out = val if out is None else out * val
        return out
    raise TypeError(f"not a coefficient term: {expr!r}")


def sup_bound(expr: Expr) -> float:
    """Upper bound for sup |expr| over the torus (exact for single waves)."""
    if isinstance(expr, Const):
        return abs(expr.value)
    if isinstance(expr, Trig):
        return abs(expr.amp)
    if isinstance(expr, Sum):
        return sum(sup_bound(t) for t in expr.terms)
    if isinstance(expr, Prod):
        return math.prod(sup_bound(f) for f in expr.factors)
    raise TypeError(f"not a coefficient term: {expr!r}")


def lip_bound(expr: Expr) -> float:
    """Upper bound for the joint (x, y) Lipschitz constant."""
    if isinstance(expr, Const):
        return 0.0
    if isinstance(expr, Trig):
        return abs(expr.amp) * TWO_PI * expr.freq
    if isinstance(expr, Sum):
        return sum(lip_bound(t) for t in expr.terms)
    if isinstance(expr, Prod):
        sups = [sup_bound(f) for f in expr.factors]
        lips = [lip_bound(f) for f in expr.factors]
        total = 0.0
        for i in range(len(lips)):
            rest = math.prod(s for j, s in enumerate(sups) if j != i)
            total += lips[i] * rest
        return total
    raise TypeError(f"not a coefficient term: {expr!r}")


def depends_on(expr: Expr, var: str) -> bool:
    if isinstance(expr, Const):
        return False
    if isinstance(expr, Trig):
        return expr.var == var
    if isinstance(expr, Sum):
        return any(depends_on(t, var) for t in expr.terms)
    if isinstance(expr, Prod):
        return any(depends_on(f, var) for f in expr.factors)
    raise TypeError(f"not a coefficient term: {expr!r}")


def freeze_slow(expr: Expr, x_bar: np.ndarray) -> Expr:
    """Substitute x := x_bar and rename y -> x, yielding a one-variable term."""
    x_bar = np.asarray(x_bar, dtype=float)
    if isinstance(expr, Const):
        return expr
    if isinstance(expr, Trig):
        if expr.var == "x":
            fn = math.sin if expr.kind == "sin" else math.cos
            return Const(expr.amp * fn(TWO_PI * expr.freq * float(x_bar[expr.axis])))
        return Trig(expr.kind, "x", expr.axis, expr.freq, expr.amp)
    if isinstance(expr, Sum):
        return Sum(tuple(freeze_slow(t, x_bar) for t in expr.terms))
    if isinstance(expr, Prod):
        return Prod(tuple(freeze_slow(f, x_bar) for f in expr.factors))
    raise TypeError(f"not a coefficient term: {expr!r}")


def oscillate(expr: Expr, inv_eps: int) -> Expr:
    """Substitute y := x/eps with 1/eps = inv_eps integer (x-terms unchanged).

    Fast waves of wave number k become slow waves of wave number k*inv_eps,
    so the composed coefficient stays exactly 1-periodic in x.
    """
    if int(inv_eps) != inv_eps or inv_eps < 1:
        raise ValueError("1/eps must be a positive integer")
    if isinstance(expr, Const):
        return expr
    if isinstance(expr, Trig):
        if expr.var == "y":
            return Trig(expr.kind, "x", expr.axis, expr.freq * int(inv_eps), expr.amp)
        return expr
    if isinstance(expr, Sum):
        return Sum(tuple(oscillate(t, inv_eps) for t in expr.terms))
    if isinstance(expr, Prod):
        return Prod(tuple(oscillate(f, inv_eps) for f in expr.factors))
    raise TypeError(f"not a coefficient term: {expr!r}")


def to_json(expr: Expr):
    if isinstance(expr, Const):
        return expr.value
    if isinstance(expr, Trig):
        spec = {"var": expr.var, "axis": expr.axis, "freq": expr.freq, "amp": expr.amp}
        return {expr.kind: spec}
    if isinstance(expr, Sum):
        return {"sum": [to_json(t) for t in expr.terms]}
    if isinstance(expr, Prod):
        return {"prod": [to_json(f) for f in expr.factors]}
    raise TypeError(f"not a coefficient term: {expr!r}")


def from_json(obj) -> Expr:
    if isinstance(obj, (int, float)):
        return Const(float(obj))
    if not isinstance(obj, dict) or len(obj) != 1:
        raise ValueError(f"malformed coefficient term: {obj!r}")
    key, body = next(iter(obj.items()))
    if key in ("sin", "cos"):
        body = dict(body or {})
        return Trig(
            key,
            body.get("var", "x"),
            int(body.get("axis", 0)),
            int(body.get("freq", 1)),
            float(body.get("amp", 1.0)),
        )
    if key == "sum":
        return Sum(tuple(from_json(t) for t in body))
    if key == "prod":
        return Prod(tuple(from_json(f) for f in body))
    raise ValueError(f"unknown coefficient term kind {key!r}")
