"""Postfix bytecode for expression trees and a numba interpreter over it.

A :class:`Program` packs several scalar expressions into flat arrays so that
hot loops (the geodesic integrator, quadrature sweeps) evaluate fields with
their first and second derivatives without touching Python objects.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numba
import numpy as np

from .ast import Call, Expr, Neg, Num, Var, is_constant, to_source, variables

OP_CONST, OP_VAR, OP_ADD, OP_SUB, OP_MUL, OP_DIV, OP_POW, OP_POWC, OP_NEG = range(9)
OP_SIN, OP_COS, OP_EXP, OP_LOG, OP_SQRT, OP_TANH = range(9, 15)

_FUNC_CODES = {"sin": OP_SIN, "cos": OP_COS, "exp": OP_EXP, "log": OP_LOG, "sqrt": OP_SQRT, "tanh": OP_TANH}
_BIN_CODES = {"+": OP_ADD, "-": OP_SUB, "*": OP_MUL, "/": OP_DIV}


@dataclass(frozen=True)
class Program:
    ops: np.ndarray  # int64 opcodes
    args: np.ndarray  # int64 operand (variable index / constant slot)
    consts: np.ndarray  # float64 constant pool
    starts: np.ndarray  # int64, len = count + 1
    depth: int

    @property
    def count(self) -> int:
        return len(self.starts) - 1


def compile_exprs(exprs: Sequence[Expr]) -> Program:
    ops: list[int] = []
    args: list[int] = []
    consts: list[float] = []
    starts = [0]
    max_depth = 1

    def emit(node: Expr, depth: int) -> int:
        # returns the maximal stack depth used by the subtree
        if isinstance(node, Num):
            ops.append(OP_CONST)
            args.append(len(consts))
            consts.append(node.value)
            return depth + 1
        if isinstance(node, Var):
            ops.append(OP_VAR)
            args.append(node.index)
            return depth + 1
        if isinstance(node, Neg):
            d = emit(node.operand, depth)
            ops.append(OP_NEG)
            args.append(0)
            return d
        if isinstance(node, Call):
            d = emit(node.arg, depth)
            ops.append(_FUNC_CODES[node.func])
            args.append(0)
            return d
        d1 = emit(node.left, depth)
        d2 = emit(node.right, depth + 1)
        if node.op == "^":
            ops.append(OP_POWC if is_constant(node.right) else OP_POW)
        else:
            ops.append(_BIN_CODES[node.op])
        args.append(0)
        return max(d1, d2)

    for e in exprs:
        max_depth = max(max_depth, emit(e, 0))
        starts.append(len(ops))
    return Program(
        np.asarray(ops, dtype=np.int64),
        np.asarray(args, dtype=np.int64),
        np.asarray(consts if consts else [0.0], dtype=np.float64),
        np.asarray(starts, dtype=np.int64),
        max_depth,
    )


@numba.njit(cache=True)
def _chain(sv, sg, sh, top, f0, f1, f2, n, order):
    if order >= 2:
        for a in range(n):
            for b in range(n):
                sh[top, a, b] = f1 * sh[top, a, b] + f2 * sg[top, a] * sg[top, b]
    if order >= 1:
        for a in range(n):
            sg[top, a] = f1 * sg[top, a]
    sv[top] = f0


@numba.njit(cache=True)
def run_programs(ops, args, consts, starts, p0, p1, x, order, out_v, out_g, out_h, sv, sg, sh):
    """Evaluate programs ``p0..p1-1`` at ``x``; results written to ``out_*[p - p0]``.

    Returns 0 on success or ``1 + instruction index`` on a domain error.
    """
    n = x.shape[0]
    for p in range(p0, p1):
        top = -1
        for k in range(starts[p], starts[p + 1]):
            op = ops[k]
            if op == OP_CONST or op == OP_VAR:
                top += 1
                if op == OP_CONST:
                    sv[top] = consts[args[k]]
                else:
                    sv[top] = x[args[k]]
                if order >= 1:
                    for a in range(n):
                        sg[top, a] = 0.0
                    if op == OP_VAR:
                        sg[top, args[k]] = 1.0
                if order >= 2:
                    for a in range(n):
                        for b in range(n):
                            sh[top, a, b] = 0.0
            elif op == OP_NEG:
                sv[top] = -sv[top]
                if order >= 1:
                    for a in range(n):
                        sg[top, a] = -sg[top, a]
                if order >= 2:
                    for a in range(n):
                        for b in range(n):
                            sh[top, a, b] = -sh[top, a, b]
            elif op == OP_ADD or op == OP_SUB:
                s = 1.0 if op == OP_ADD else -1.0
                top -= 1
                sv[top] = sv[top] + s * sv[top + 1]
                if order >= 1:
                    for a in range(n):
                        sg[top, a] += s * sg[top + 1, a]
                if order >= 2:
                    for a in range(n):
                        for b in range(n):
                            sh[top, a, b] += s * sh[top + 1, a, b]
            elif op == OP_MUL or op == OP_DIV:
                top -= 1
                if op == OP_DIV:
                    bv = sv[top + 1]
                    if bv == 0.0:
                        return 1 + k
                    _chain(sv, sg, sh, top + 1, 1.0 / bv, -1.0 / (bv * bv), 2.0 / (bv * bv * bv), n, order)
                av = sv[top]
                bv = sv[top + 1]
                if order >= 2:
                    for a in range(n):
                        for b in range(n):
                            sh[top, a, b] = (av * sh[top + 1, a, b] + bv * sh[top, a, b]
                                             + sg[top, a] * sg[top + 1, b] + sg[top + 1, a] * sg[top, b])
                if order >= 1:
                    for a in range(n):
                        sg[top, a] = av * sg[top + 1, a] + bv * sg[top, a]
                sv[top] = av * bv
            elif op == OP_POWC:
                top -= 1
                c = sv[top + 1]
                av = sv[top]
                if c == 0.0:
                    _chain(sv, sg, sh, top, 1.0, 0.0, 0.0, n, order)
                    continue
                integral = c == np.floor(c)
                if av < 0.0 and not integral:
                    return 1 + k
                if av == 0.0 and (c < 0.0 or (c < 2.0 and not integral)):
                    return 1 + k
                f1 = 1.0 if c == 1.0 else c * av ** (c - 1.0)
                if c == 1.0:
                    f2 = 0.0
                elif c == 2.0:
                    f2 = 2.0
                else:
                    f2 = c * (c - 1.0) * av ** (c - 2.0)
                _chain(sv, sg, sh, top, av**c, f1, f2, n, order)
            elif op == OP_POW:
                # a^b = exp(b log a)
                top -= 1
                av = sv[top]
                if av <= 0.0:
                    return 1 + k
                _chain(sv, sg, sh, top, np.log(av), 1.0 / av, -1.0 / (av * av), n, order)
                lv = sv[top]
                bv = sv[top + 1]
                if order >= 2:
                    for a in range(n):
                        for b in range(n):
                            sh[top, a, b] = (lv * sh[top + 1, a, b] + bv * sh[top, a, b]
                                             + sg[top, a] * sg[top + 1, b] + sg[top + 1, a] * sg[top, b])
                if order >= 1:
                    for a in range(n):
                        sg[top, a] = lv * sg[top + 1, a] + bv * sg[top, a]
                sv[top] = lv * bv
                e = np.exp(sv[top])
                _chain(sv, sg, sh, top, e, e, e, n, order)
            else:
                av = sv[top]
                if op == OP_SIN:
                    s_, c_ = np.sin(av), np.cos(av)
                    _chain(sv, sg, sh, top, s_, c_, -s_, n, order)
                elif op == OP_COS:
                    s_, c_ = np.sin(av), np.cos(av)
                    _chain(sv, sg, sh, top, c_, -s_, -c_, n, order)
                elif op == OP_EXP:
                    e = np.exp(av)
                    _chain(sv, sg, sh, top, e, e, e, n, order)
                elif op == OP_LOG:
                    if av <= 0.0:
                        return 1 + k
                    _chain(sv, sg, sh, top, np.log(av), 1.0 / av, -1.0 / (av * av), n, order)
                elif op == OP_SQRT:
                    if av <= 0.0:
                        return 1 + k
                    r = np.sqrt(av)
                    _chain(sv, sg, sh, top, r, 0.5 / r, -0.25 / (av * r), n, order)
                else:
                    t = np.tanh(av)
                    _chain(sv, sg, sh, top, t, 1.0 - t * t, -2.0 * t * (1.0 - t * t), n, order)
        out_v[p - p0] = sv[0]
        if order >= 1:
            for a in range(n):
                out_g[p - p0, a] = sg[0, a]
        if order >= 2:
            for a in range(n):
                for b in range(n):
                    out_h[p - p0, a, b] = sh[0, a, b]
    return 0


@numba.njit(cache=True)
def run_batch(ops, args, consts, starts, X, order, out_v, out_g, out_h, sv, sg, sh):
    """:func:`run_programs` over the rows of ``X``; returns ``1 + row`` of the first failure or 0."""
    m = starts.shape[0] - 1
    for r in range(X.shape[0]):
        code = run_programs(ops, args, consts, starts, 0, m, X[r], order, out_v[r], out_g[r], out_h[r], sv, sg, sh)
        if code != 0:
            return 1 + r
    return 0


class CompiledFields:
    """A bundle of scalar expressions evaluated together through :func:`run_programs`."""

    def __init__(self, exprs: Sequence[Expr], dim: int):
        self.exprs = list(exprs)
        self.dim = dim
        for e in self.exprs:
            used = variables(e)
            if used and max(used) >= dim:
                raise ValueError(f"expression {to_source(e)!r} uses x{max(used) + 1} in dimension {dim}")
        self.program = compile_exprs(self.exprs)
        d = self.program.depth + 1
        self._sv = np.zeros(d)
        self._sg = np.zeros((d, dim))
        self._sh = np.zeros((d, dim, dim))

    def __len__(self):
        return len(self.exprs)

    def jets(self, x, order: int = 2):
        """Values, gradients and Hessians of every expression at ``x``."""
        x = np.ascontiguousarray(x, dtype=float)
        m, n = len(self.exprs), self.dim
        v = np.zeros(m)
        g = np.zeros((m, n))
        h = np.zeros((m, n, n))
        pr = self.program
        code = run_programs(pr.ops, pr.args, pr.consts, pr.starts, 0, m, x, order, v, g, h,
                            self._sv, self._sg, self._sh)
        if code:
            self._raise_domain(x)
        return v, g, h

    def jets_batch(self, X, order: int = 2):
        """Like :meth:`jets` for each row of ``X``; outputs gain a leading axis."""
        X = np.ascontiguousarray(np.atleast_2d(X), dtype=float)
        N, m, n = len(X), len(self.exprs), self.dim
        v = np.zeros((N, m))
        g = np.zeros((N, m, n))
        h = np.zeros((N, m, n, n))
        pr = self.program
        code = run_batch(pr.ops, pr.args, pr.consts, pr.starts, X, order, v, g, h, self._sv, self._sg, self._sh)
        if code:
            self._raise_domain(X[code - 1])
        return v, g, h

    def _raise_domain(self, x):
        from .jet import FieldDomainError, eval_jet2

        for e in self.exprs:
            eval_jet2(e, x)  # raises with source offset
        raise FieldDomainError(f"domain error evaluating fields at {np.asarray(x).tolist()}")
