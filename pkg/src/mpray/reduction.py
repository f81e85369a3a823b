"""Reduced magnetic system ``(G, alpha) = (2(k - U) g, alpha)`` at energy 1/2 and the
time change that turns MP-geodesics into unit-speed magnetic geodesics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

from .fieldexpr import Expr
from .fieldexpr import symbolic as sym
from .flow import Trajectory, mp_rhs
from .geometry import GeometryError, MPSystem, scaled_matrix


def energy_factor(sys: MPSystem) -> Expr:
    """Expression for ``P = 2(k - U)``."""
    return sym.mul(2.0, sym.sub(sys.energy, sys.potential))


@dataclass(frozen=True, eq=False)
class MagneticSystem:
    """A magnetic system ``(G, alpha)`` stored as an MP-system with ``U = 0`` and ``k = 1/2``.

    ``factor`` is the conformal factor ``P`` relating ``G`` to the parent metric.
    """

    system: MPSystem
    factor: Expr
    parent: MPSystem

    @property
    def dim(self) -> int:
        return self.system.dim

    @property
    def radius(self) -> float:
        return self.system.radius

    def P(self, x) -> float:
        return self.parent.P(x)


def reduce(sys: MPSystem, check: bool = True) -> MagneticSystem:
    if check:
        sys.validate()
    P = energy_factor(sys)
    G = scaled_matrix(P, sys.metric)
    msys = sys.replace(metric=G, potential=sym.ZERO, energy=0.5, name=f"reduced({sys.name})")
    return MagneticSystem(msys, P, sys)


def magnetic_rhs(msys: MagneticSystem | MPSystem, x, w):
    s = msys.system if isinstance(msys, MagneticSystem) else msys
    if not sym.is_zero(s.potential):
        raise GeometryError("a magnetic system must have zero potential")
    return mp_rhs(s, x, w)


@dataclass(frozen=True)
class ReparamMap:
    """Monotone table ``s(t) = int_0^t P(sigma(r)) dr`` with monotone-cubic interpolation."""

    t: np.ndarray
    s: np.ndarray

    def __post_init__(self):
        if self.s[0] != 0.0 or np.any(np.diff(self.s) <= 0):
            raise ValueError("s must start at 0 and increase strictly")

    def s_of_t(self, t):
        return PchipInterpolator(self.t, self.s)(t)

    def t_of_s(self, s: float) -> float:
        if s <= 0:
            return 0.0
        if s >= self.s[-1]:
            return float(self.t[-1])
        f = PchipInterpolator(self.t, self.s)
        i = int(np.searchsorted(self.s, s))
        return float(brentq(lambda t: f(t) - s, self.t[i - 1], self.t[i], xtol=1e-15, rtol=1e-15))


@dataclass(frozen=True, eq=False)
class MagneticTrajectory:
    s: np.ndarray
    x: np.ndarray
    w: np.ndarray  # dgamma/ds

    @property
    def length(self) -> float:
        return float(self.s[-1])


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


def reparametrize(sys: MPSystem, traj: Trajectory) -> tuple[MagneticTrajectory, ReparamMap]:
    """Time change ``ds = P dt``; returns the curve sampled at the trajectory nodes."""
    if abs(traj.energy - sys.energy) > 1e-12:
        raise ValueError("trajectory energy does not match the system")
    n = sys.dim
    t = traj.times
    s = np.zeros_like(t)
    for i in range(len(t) - 1):
        a, b = t[i], t[i + 1]
        tq = 0.5 * (a + b) + 0.5 * (b - a) * _GL_NODES
        Pq = np.array([sys.P(st[:n]) for st in traj.at(tq)])
        s[i + 1] = s[i] + 0.5 * (b - a) * float(_GL_WEIGHTS @ Pq)
    P = np.array([sys.P(x) for x in traj.x])
    w = traj.v / P[:, None]
    return MagneticTrajectory(s, traj.x.copy(), w), ReparamMap(t.copy(), s)
