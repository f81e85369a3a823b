"""Tree builders with constant folding, exact differentiation and substitution.

These are used to derive new fields (reduced metrics, pullbacks, symmetric
differentials) that stay expression-backed, so every derived field can be fed
to the same evaluators as user input.
"""

from __future__ import annotations

import math
from typing import Mapping, Sequence

from .ast import BinOp, Call, Expr, Neg, Num, Var, is_constant

ZERO = Num(0.0)
ONE = Num(1.0)


def const(c: float) -> Num:
    return Num(float(c))


def as_expr(a) -> Expr:
    if isinstance(a, (Num, Var, Neg, BinOp, Call)):
        return a
    return const(a)


def _num(a: Expr):
    return a.value if isinstance(a, Num) else None


def add(a, b) -> Expr:
    a, b = as_expr(a), as_expr(b)
    va, vb = _num(a), _num(b)
    if va is not None and vb is not None:
        return const(va + vb)
    if va == 0.0:
        return b
    if vb == 0.0:
        return a
    return BinOp("+", a, b)


def sub(a, b) -> Expr:
    a, b = as_expr(a), as_expr(b)
    va, vb = _num(a), _num(b)
    if va is not None and vb is not None:
        return const(va - vb)
    if vb == 0.0:
        return a
    if va == 0.0:
        return neg(b)
    return BinOp("-", a, b)


def neg(a) -> Expr:
    a = as_expr(a)
    if isinstance(a, Num):
        return const(-a.value)
    if isinstance(a, Neg):
        return a.operand
    return Neg(a)


def mul(a, b) -> Expr:
    a, b = as_expr(a), as_expr(b)
    va, vb = _num(a), _num(b)
    if va is not None and vb is not None:
        return const(va * vb)
    if va == 0.0 or vb == 0.0:
        return ZERO
    if va == 1.0:
        return b
    if vb == 1.0:
        return a
    if va == -1.0:
        return neg(b)
    if vb == -1.0:
        return neg(a)
    return BinOp("*", a, b)


def div(a, b) -> Expr:
    a, b = as_expr(a), as_expr(b)
    va, vb = _num(a), _num(b)
    if vb == 0.0:
        raise ZeroDivisionError("symbolic division by the constant 0")
    if va is not None and vb is not None:
        return const(va / vb)
    if va == 0.0:
        return ZERO
    if vb == 1.0:
        return a
    return BinOp("/", a, b)


def power(a, b) -> Expr:
    a, b = as_expr(a), as_expr(b)
    va, vb = _num(a), _num(b)
    if vb == 0.0:
        return ONE
    if vb == 1.0:
        return a
    if va is not None and vb is not None:
        return const(va**vb)
    return BinOp("^", a, b)


def call(func: str, a) -> Expr:
    a = as_expr(a)
    va = _num(a)
    if va is not None:
        return const(getattr(math, func)(va))
    return Call(func, a)


def total(terms: Sequence) -> Expr:
    out: Expr = ZERO
    for t in terms:
        out = add(out, t)
    return out


def diff(node: Expr, i: int) -> Expr:
    """Exact partial derivative of ``node`` with respect to ``x_{i+1}``."""
    if isinstance(node, Num):
        return ZERO
    if isinstance(node, Var):
        return ONE if node.index == i else ZERO
    if isinstance(node, Neg):
        return neg(diff(node.operand, i))
    if isinstance(node, Call):
        a = node.arg
        da = diff(a, i)
        if isinstance(da, Num) and da.value == 0.0:
            return ZERO
        f = node.func
        if f == "sin":
            outer = call("cos", a)
        elif f == "cos":
            outer = neg(call("sin", a))
        elif f == "exp":
            outer = node
        elif f == "log":
            outer = div(ONE, a)
        elif f == "sqrt":
            outer = div(const(0.5), node)
        else:  # tanh
            outer = sub(ONE, mul(node, node))
        return mul(outer, da)
    a, b = node.left, node.right
    da, db = diff(a, i), diff(b, i)
    if node.op == "+":
        return add(da, db)
    if node.op == "-":
        return sub(da, db)
    if node.op == "*":
        return add(mul(da, b), mul(a, db))
    if node.op == "/":
        return div(sub(mul(da, b), mul(a, db)), mul(b, b))
    if is_constant(b):
        return mul(mul(b, power(a, sub(b, ONE))), da)
    # d(a^b) = a^b (db log a + b da / a)
    return mul(node, add(mul(db, call("log", a)), div(mul(b, da), a)))


def gradient(node: Expr, n: int) -> list[Expr]:
    return [diff(node, i) for i in range(n)]


def substitute(node: Expr, mapping: Mapping[int, Expr]) -> Expr:
    """Replace each variable ``x_{i+1}`` by ``mapping[i]`` (composition of fields)."""
    if isinstance(node, Num):
        return node
    if isinstance(node, Var):
        return mapping.get(node.index, node)
    if isinstance(node, Neg):
        return neg(substitute(node.operand, mapping))
    if isinstance(node, Call):
        return call(node.func, substitute(node.arg, mapping))
    a, b = substitute(node.left, mapping), substitute(node.right, mapping)
    return {"+": add, "-": sub, "*": mul, "/": div, "^": power}[node.op](a, b)


def is_zero(node: Expr) -> bool:
    return isinstance(node, Num) and node.value == 0.0


# Small matrix helpers over expression trees.

def mat_det(m: Sequence[Sequence[Expr]]) -> Expr:
    n = len(m)
    if n == 1:
        return m[0][0]
    if n == 2:
        return sub(mul(m[0][0], m[1][1]), mul(m[0][1], m[1][0]))
    if n == 3:
        return total(
            mul(m[0][j], _cofactor(m, 0, j)) for j in range(3)
        )
    raise ValueError("only dimensions 1..3 are supported")


def _cofactor(m, i: int, j: int) -> Expr:
    n = len(m)
    rows = [r for r in range(n) if r != i]
    cols = [c for c in range(n) if c != j]
    minor = [[m[r][c] for c in cols] for r in rows]
    d = mat_det(minor)
    return d if (i + j) % 2 == 0 else neg(d)


def mat_inv(m: Sequence[Sequence[Expr]]) -> list[list[Expr]]:
    n = len(m)
    if n == 1:
        return [[div(ONE, m[0][0])]]
    det = mat_det(m)
    return [[div(_cofactor(m, j, i), det) for j in range(n)] for i in range(n)]
