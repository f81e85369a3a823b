"""Fixed-energy MP-geodesic flow: right-hand side, integration with boundary exit,
exit time and the MP-exponential map."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from . import _dopri
from .fieldexpr import Expr
from .fieldexpr import symbolic as sym
from .fieldexpr.compiled import compile_exprs
from .geometry import GeometryError, MPSystem, energy, inverse_metric, lorentz_from_jets, christoffel_from_jets

log = logging.getLogger(__name__)

DEFAULT_RTOL = 1e-10
DEFAULT_ATOL = 1e-12


class NumericalFailure(RuntimeError):
    """Integration could not complete (step underflow, field domain error, ...)."""


class TrappedRayError(NumericalFailure):
    """No boundary exit before ``t_max``: the ray may be trapped and the system not simple."""


@dataclass(frozen=True)
class Channel:
    """Line integral ``w * (h_ij v^i v^j + beta_i v^i + V)`` carried along the flow.

    ``weight`` is ``"none"`` (``w = 1``) or ``"sqrtP"`` (``w = sqrt(2(k - U))``).
    """

    h: tuple[tuple[Expr, ...], ...]
    beta: tuple[Expr, ...]
    V: Expr
    weight: str = "none"


def channel_from(obj, weight: str = "none") -> Channel:
    if isinstance(obj, Channel):
        return obj
    return Channel(tuple(tuple(r) for r in obj.h), tuple(obj.beta), obj.V, weight)


@dataclass(frozen=True)
class ExitRecord:
    tau: float
    x: np.ndarray
    v: np.ndarray


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Accepted steps of one integration with stage data for dense output."""

    dim: int
    times: np.ndarray
    states: np.ndarray
    stages: np.ndarray
    exit: ExitRecord | None
    status: str
    energy_drift: float
    energy: float

    @property
    def x(self) -> np.ndarray:
        return self.states[:, : self.dim]

    @property
    def v(self) -> np.ndarray:
        return self.states[:, self.dim: 2 * self.dim]

    @property
    def integrals(self) -> np.ndarray:
        """Channel values at the final time."""
        return self.states[-1, 2 * self.dim:]

    @property
    def duration(self) -> float:
        return float(self.times[-1])

    def at(self, t) -> np.ndarray:
        """Dense-output state(s) at time(s) ``t`` within ``[0, duration]``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        idx = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, len(self.times) - 2)
        if len(self.times) == 1:
            return np.repeat(self.states[:1], len(t), axis=0)
        h = self.times[idx + 1] - self.times[idx]
        s = np.where(h > 0, (t - self.times[idx]) / np.where(h > 0, h, 1.0), 0.0)
        powers = np.stack([s, s**2, s**3, s**4], -1)
        coef = powers @ _dopri.P.T  # (m, 7)
        incr = np.einsum("mr,mrq->mq", coef, self.stages[idx])
        return self.states[idx] + h[:, None] * incr

    def to_csv(self, sys: MPSystem | None = None) -> str:
        """CSV with columns ``t, x1..xn, v1..vn, E``."""
        n = self.dim
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t"] + [f"x{i + 1}" for i in range(n)] + [f"v{i + 1}" for i in range(n)] + ["E"])
        for t, st in zip(self.times, self.states):
            E = energy(sys, st[:n], st[n:2 * n]) if sys is not None else float("nan")
            w.writerow([_fmt(t)] + [_fmt(c) for c in st[: 2 * n]] + [_fmt(E)])
        return buf.getvalue()


def _fmt(v: float) -> str:
    return f"{float(v):.15e}"


_STATUS = {
    _dopri.STATUS_EXIT: "exit",
    _dopri.STATUS_TMAX: "t_max",
    _dopri.STATUS_UNDERFLOW: "underflow",
    _dopri.STATUS_DOMAIN: "domain",
    _dopri.STATUS_MAXSTEPS: "max_steps",
}


class Flow:
    """Compiled MP-flow of ``sys`` carrying the given line-integral channels."""

    def __init__(self, sys: MPSystem, channels: Sequence[Channel] = (), rtol: float = DEFAULT_RTOL,
                 atol: float = DEFAULT_ATOL, max_steps: int = 200_000):
        self.sys = sys
        self.channels = [channel_from(c) for c in channels]
        self.rtol = rtol
        self.atol = atol
        self.max_steps = max_steps
        n = sys.dim
        exprs: list[Expr] = list(sys.field_exprs)
        for c in self.channels:
            exprs += [c.h[i][j] for i, j in sys.upper] + list(c.beta) + [c.V]
            # the kernel contracts h over all (i, j); off-diagonal entries appear twice there
        self.program = compile_exprs(exprs)
        self.wmode = np.array([1 if c.weight == "sqrtP" else 0 for c in self.channels], dtype=np.int64)
        for c in self.channels:
            if c.weight not in ("none", "sqrtP"):
                raise ValueError(f"unknown channel weight {c.weight!r}")
        self.n = n

    @cached_property
    def default_t_max(self) -> float:
        pts = self.sys.sample_grid(7)
        pmax = max(self.sys.P(x) for x in pts)
        return 50.0 * self.sys.radius / np.sqrt(max(pmax, 1e-300))

    def run(self, x, v, t_max: float | None = None, stop_at_exit: bool = True) -> Trajectory:
        n = self.n
        y0 = np.concatenate([np.asarray(x, float), np.asarray(v, float), np.zeros(len(self.channels))])
        if y0.shape[0] != 2 * n + len(self.channels):
            raise ValueError("x and v must have the system dimension")
        horizon = t_max is None
        t_max = self.default_t_max if horizon else float(t_max)
        speed = float(np.linalg.norm(y0[n:2 * n]))
        hmax = 0.25 * self.sys.radius / max(speed, 1e-12)
        pr = self.program
        status, t_exit, y_exit, ts, ys, ks, _nsteps, drift = _dopri.integrate_kernel(
            y0, n, len(self.channels), pr.ops, pr.args, pr.consts, pr.starts, self.sys.energy, self.wmode,
            self.sys.radius, t_max, self.rtol, self.atol, hmax, self.max_steps, stop_at_exit, pr.depth)
        name = _STATUS[status]
        if name in ("underflow", "domain", "max_steps"):
            raise NumericalFailure(f"integration failed ({name}) from x={list(map(float, x))}, v={list(map(float, v))}")
        exit_rec = None
        if name == "exit":
            exit_rec = ExitRecord(float(t_exit), y_exit[:n].copy(), y_exit[n:2 * n].copy())
        elif stop_at_exit and horizon:
            # no exit within the default horizon (many crossing times)
            name = "trapped"
            log.warning("no exit before t_max=%g from x=%s: possibly trapped / not simple", t_max, list(x))
        return Trajectory(n, ts, ys, ks, exit_rec, name, float(drift), self.sys.energy)


def mp_rhs(sys: MPSystem, x, v) -> tuple[np.ndarray, np.ndarray]:
    """``(dx, dv)`` with ``dv = -Gamma(v, v) + Y v - grad U``."""
    x = np.asarray(x, float)
    v = np.asarray(v, float)
    g, dg, _ddg, _a, da, _dda, _U, dU, _ = sys.jets(x, 1)
    Gamma = christoffel_from_jets(g, dg, x)
    Y = lorentz_from_jets(g, da, x)
    dv = -np.einsum("ijk,j,k->i", Gamma, v, v) + Y @ v - inverse_metric(g, x) @ dU
    return v.copy(), dv


def integrate(sys: MPSystem, x, v, t_max: float | None = None, *, rtol: float = DEFAULT_RTOL,
              atol: float = DEFAULT_ATOL, check_energy: bool = True) -> Trajectory:
    """Integrate the MP-flow from ``(x, v)`` until boundary exit or ``t_max``."""
    if check_energy:
        E = energy(sys, x, v)
        if abs(E - sys.energy) > 1e-10 * max(1.0, abs(sys.energy)):
            raise GeometryError(f"initial energy {E!r} differs from k={sys.energy!r}")
    return Flow(sys, rtol=rtol, atol=atol).run(x, v, t_max)


def exit_time(sys: MPSystem, x, v, **kw) -> float:
    """``tau(x, v)`` for ``(x, v)`` in the inward boundary bundle."""
    traj = integrate(sys, x, v, **kw)
    if traj.exit is None:
        raise TrappedRayError(f"no exit from x={list(x)}, v={list(v)} before t_max")
    return traj.exit.tau


class LeftDomainError(NumericalFailure):
    def __init__(self, fraction: float):
        self.fraction = fraction
        super().__init__(f"geodesic left M after {fraction:.6g} of the requested parameter")


def mp_exp(sys: MPSystem, x, w, *, rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL,
           flow: Flow | None = None) -> np.ndarray:
    """``exp_x(t v)`` where ``w = t v`` with ``v`` on the energy sphere at ``x``."""
    x = np.asarray(x, float)
    w = np.asarray(w, float)
    g = sys.metric_at(x)
    wn = float(np.sqrt(w @ g @ w))
    if wn == 0.0:
        return x.copy()
    P = sys.P(x)
    t = wn / np.sqrt(P)
    v = w / t
    flow = flow or Flow(sys, rtol=rtol, atol=atol)
    traj = flow.run(x, v, t_max=t, stop_at_exit=True)
    if traj.exit is not None and traj.exit.tau < t * (1 - 1e-12):
        raise LeftDomainError(traj.exit.tau / t)
    return traj.x[-1].copy()


def exp_jacobian_det(sys: MPSystem, x, w, step: float = 1e-6, flow: Flow | None = None) -> float:
    """Central finite-difference Jacobian determinant of ``w -> exp_x(w)``."""
    flow = flow or Flow(sys)
    n = sys.dim
    J = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = step
        J[:, j] = (mp_exp(sys, x, w + e, flow=flow) - mp_exp(sys, x, w - e, flow=flow)) / (2 * step)
    return float(np.linalg.det(J))


def unit_channel() -> Channel:
    """Channel integrating ``1`` (so it returns elapsed time)."""
    return Channel(((sym.ZERO,),), (), sym.ONE)
