"""Second-order forward-mode jets: value, gradient and Hessian propagated together."""

from __future__ import annotations

import math

import numpy as np

from .ast import BinOp, Call, Expr, Neg, Num, Var, is_constant


class FieldDomainError(ArithmeticError):
    """A function was evaluated outside its domain (``log`` of a nonpositive value, ...)."""

    def __init__(self, message: str, offset: int = -1):
        self.offset = offset
        super().__init__(f"{message} (expression offset {offset})" if offset >= 0 else message)


class Jet2:
    """Truncated second-order Taylor expansion of a scalar field at a point."""

    __slots__ = ("value", "grad", "hess")

    def __init__(self, value: float, grad: np.ndarray, hess: np.ndarray):
        self.value = float(value)
        self.grad = grad
        self.hess = hess

    @classmethod
    def constant(cls, c: float, n: int) -> "Jet2":
        return cls(c, np.zeros(n), np.zeros((n, n)))

    @classmethod
    def variable(cls, x: float, i: int, n: int) -> "Jet2":
        g = np.zeros(n)
        g[i] = 1.0
        return cls(x, g, np.zeros((n, n)))

    @property
    def dim(self) -> int:
        return self.grad.shape[0]

    def _lift(self, other) -> "Jet2":
        if isinstance(other, Jet2):
            return other
        return Jet2.constant(float(other), self.dim)

    def __add__(self, other):
        o = self._lift(other)
        return Jet2(self.value + o.value, self.grad + o.grad, self.hess + o.hess)

    __radd__ = __add__

    def __neg__(self):
        return Jet2(-self.value, -self.grad, -self.hess)

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, other):
        if not isinstance(other, Jet2):
            c = float(other)
            return Jet2(c * self.value, c * self.grad, c * self.hess)
        a, b = self, other
        cross = np.outer(a.grad, b.grad)
        return Jet2(
            a.value * b.value,
            a.value * b.grad + b.value * a.grad,
            a.value * b.hess + b.value * a.hess + cross + cross.T,
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self * self._lift(other).reciprocal()

    def __rtruediv__(self, other):
        return self._lift(other) * self.reciprocal()

    def __pow__(self, other):
        if isinstance(other, Jet2):
            if np.any(other.grad) or np.any(other.hess):
                return (other * self.log()).exp()
            other = other.value
        return self.powc(float(other))

    def chain(self, f0: float, f1: float, f2: float) -> "Jet2":
        """Compose a scalar function with derivatives (f0, f1, f2) at ``self.value``."""
        return Jet2(f0, f1 * self.grad, f1 * self.hess + f2 * np.outer(self.grad, self.grad))

    def reciprocal(self, offset: int = -1) -> "Jet2":
        a = self.value
        if a == 0.0:
            raise FieldDomainError("division by zero", offset)
        return self.chain(1.0 / a, -1.0 / a**2, 2.0 / a**3)

    def powc(self, c: float, offset: int = -1) -> "Jet2":
        a = self.value
        if c == 0.0:
            return Jet2.constant(1.0, self.dim)
        integral = c == int(c)
        if a < 0.0 and not integral:
            raise FieldDomainError(f"non-integer power of negative value {a}", offset)
        if a == 0.0 and (c < 0.0 or (c < 2.0 and not integral)):
            raise FieldDomainError(f"zero raised to the power {c} is not twice differentiable", offset)
        f1 = c * a ** (c - 1.0) if c != 1.0 else 1.0
        f2 = c * (c - 1.0) * a ** (c - 2.0) if c not in (1.0, 2.0) else (2.0 if c == 2.0 else 0.0)
        return self.chain(a**c, f1, f2)

    def sin(self):
        a = self.value
        return self.chain(math.sin(a), math.cos(a), -math.sin(a))

    def cos(self):
        a = self.value
        return self.chain(math.cos(a), -math.sin(a), -math.cos(a))

    def exp(self):
        e = math.exp(self.value)
        return self.chain(e, e, e)

    def log(self, offset: int = -1):
        a = self.value
        if a <= 0.0:
            raise FieldDomainError(f"log of nonpositive value {a}", offset)
        return self.chain(math.log(a), 1.0 / a, -1.0 / a**2)

    def sqrt(self, offset: int = -1):
        a = self.value
        if a <= 0.0:
            raise FieldDomainError(f"sqrt of nonpositive value {a}", offset)
        r = math.sqrt(a)
        return self.chain(r, 0.5 / r, -0.25 / (a * r))

    def tanh(self):
        t = math.tanh(self.value)
        return self.chain(t, 1.0 - t * t, -2.0 * t * (1.0 - t * t))

    def __repr__(self):
        return f"Jet2(value={self.value!r}, grad={self.grad.tolist()!r}, hess={self.hess.tolist()!r})"


def eval_jet2(node: Expr, x) -> Jet2:
    """Evaluate ``node`` at point ``x`` with exact gradient and Hessian."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    return _eval(node, [Jet2.variable(x[i], i, n) for i in range(n)], n)


def evaluate(node: Expr, x) -> float:
    return eval_jet2(node, x).value


def _eval(node: Expr, xs: list[Jet2], n: int) -> Jet2:
    if isinstance(node, Num):
        return Jet2.constant(node.value, n)
    if isinstance(node, Var):
        if node.index >= n:
            raise FieldDomainError(f"variable x{node.index + 1} used at a {n}-dimensional point", node.pos)
        return xs[node.index]
    if isinstance(node, Neg):
        return -_eval(node.operand, xs, n)
    if isinstance(node, Call):
        a = _eval(node.arg, xs, n)
        if node.func in ("log", "sqrt"):
            return getattr(a, node.func)(node.pos)
        return getattr(a, node.func)()
    a = _eval(node.left, xs, n)
    if node.op == "^" and is_constant(node.right):
        return a.powc(_eval(node.right, xs, n).value, node.pos)
    b = _eval(node.right, xs, n)
    if node.op == "+":
        return a + b
    if node.op == "-":
        return a - b
    if node.op == "*":
        return a * b
    if node.op == "/":
        return a * b.reciprocal(node.pos)
    # variable exponent: a^b = exp(b log a)
    return (b * a.log(node.pos)).exp()
