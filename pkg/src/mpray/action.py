"""Two-point shooting between boundary points, the Mane action along the resulting
MP-geodesic, its linearization, and k-gauge transformations."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .fieldexpr import Expr, Var, CompiledFields
from .fieldexpr import symbolic as sym
from .flow import Channel, Flow, NumericalFailure, Trajectory
from .geometry import (FieldLike, GeometryError, MPSystem, _orthonormal_complement, as_expr, as_exprs,
                       boundary_samples, inward_normal, scaled_matrix)
from .reduction import MagneticSystem
from .transform import TensorTriple


class ShootingError(NumericalFailure):
    def __init__(self, msg: str, miss: float):
        self.miss = miss
        super().__init__(f"{msg} (best miss {miss:.3e}); the system may not be simple")


@dataclass(frozen=True, eq=False)
class ShootResult:
    x: np.ndarray
    y: np.ndarray
    v0: np.ndarray
    trajectory: Trajectory
    miss: float
    iterations: int

    @property
    def travel_time(self) -> float:
        return self.trajectory.exit.tau


def action_triple(sys: MPSystem) -> TensorTriple:
    """Integrand ``1/2 |v|_g^2 + k - alpha(v) - U`` as ``[g/2, -alpha, k - U]``."""
    return TensorTriple(scaled_matrix(sym.const(0.5), sys.metric), tuple(sym.neg(a) for a in sys.alpha),
                        sym.sub(sys.energy, sys.potential))


class Shooter:
    """Damped Gauss-Newton on the exit point over the inward direction at ``x``.

    Directions use the gnomonic chart ``u(a) = nu + sum a_i e_i`` (normalized onto the energy sphere),
    which covers the open inward hemisphere and is regular at the normal.
    """

    def __init__(self, sys: MPSystem, tol: float = 1e-11, max_iter: int = 40, fd_step: float = 1e-6,
                 channels: Sequence[Channel] = (), rtol: float = 1e-11, atol: float = 1e-13):
        self.sys = sys
        self.tol = tol * sys.radius
        self.max_iter = max_iter
        self.fd_step = fd_step
        self.flow = Flow(sys, list(channels), rtol=rtol, atol=atol)

    def _frame(self, x):
        g = self.sys.metric_at(x)
        nu = inward_normal(self.sys, x)
        return g, nu, _orthonormal_complement(g, nu)

    def _direction(self, x, a, frame):
        g, nu, es = frame
        u = nu + sum(ai * e for ai, e in zip(a, es))
        u = u / np.sqrt(u @ g @ u)
        return np.sqrt(self.sys.P(x)) * u

    def _exit(self, x, v) -> Trajectory:
        traj = self.flow.run(x, v)
        if traj.exit is None:
            raise ShootingError("ray did not exit", np.inf)
        return traj

    def __call__(self, x, y) -> ShootResult:
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        if np.linalg.norm(x - y) <= 1e-9 * self.sys.radius:
            raise ValueError("shooting needs distinct boundary points")
        frame = self._frame(x)
        g, nu, es = frame
        d = y - x
        c = d @ g @ nu
        if c <= 0:
            raise ValueError("target lies outside the inward half-space at x")
        a = np.array([(d @ g @ e) / c for e in es])
        traj = self._exit(x, self._direction(x, a, frame))
        r = traj.exit.x - y
        miss = float(np.linalg.norm(r))
        it = 0
        while miss > self.tol and it < self.max_iter:
            it += 1
            J = np.empty((len(y), len(a)))
            for j in range(len(a)):
                da = np.zeros(len(a))
                da[j] = self.fd_step
                xp = self._exit(x, self._direction(x, a + da, frame)).exit.x
                xm = self._exit(x, self._direction(x, a - da, frame)).exit.x
                J[:, j] = (xp - xm) / (2 * self.fd_step)
            step = np.linalg.lstsq(J, -r, rcond=None)[0]
            lam = 1.0
            while lam > 1e-4:
                try:
                    t_new = self._exit(x, self._direction(x, a + lam * step, frame))
                except ShootingError:
                    lam *= 0.5
                    continue
                r_new = t_new.exit.x - y
                if np.linalg.norm(r_new) < miss:
                    break
                lam *= 0.5
            else:
                raise ShootingError(f"line search failed after {it} iterations", miss)
            a = a + lam * step
            traj, r = t_new, r_new
            miss = float(np.linalg.norm(r))
        if miss > self.tol:
            raise ShootingError(f"no convergence in {self.max_iter} iterations", miss)
        return ShootResult(x, y, self._direction(x, a, frame), traj, miss, it)


def shoot(sys: MPSystem, x, y, **kw) -> ShootResult:
    return Shooter(sys, **kw)(x, y)


class ActionEvaluator:
    """Shooting with the action integrand (and optional extra triples) carried along."""

    def __init__(self, sys: MPSystem, extra: Sequence[TensorTriple] = (), **kw):
        self.sys = sys
        chans = [action_triple(sys).channel()] + [t.channel() for t in extra]
        self.shooter = Shooter(sys, channels=chans, **kw)

    def __call__(self, x, y) -> tuple[float, np.ndarray, ShootResult]:
        res = self.shooter(x, y)
        ints = res.trajectory.integrals
        return float(ints[0]), ints[1:].copy(), res


def mane_action(sys: MPSystem, x, y, **kw) -> float:
    """Action ``int 1/2|sdot|^2 + k - alpha(sdot) - U dt`` along the MP-geodesic from ``x`` to ``y``."""
    return ActionEvaluator(sys, **kw)(x, y)[0]


def magnetic_action(msys: MagneticSystem | MPSystem, x, y, **kw) -> float:
    """Same functional for the magnetic system (``U = 0``, ``k = 1/2``): ``int 1 - alpha(gamma') ds``."""
    s = msys.system if isinstance(msys, MagneticSystem) else msys
    if not sym.is_zero(s.potential) or s.energy != 0.5:
        raise GeometryError("magnetic action needs U = 0 and k = 1/2")
    return mane_action(s, x, y, **kw)


def perturbed(sys: MPSystem, f: TensorTriple, s: float) -> MPSystem:
    n = sys.dim
    c = sym.const(s)
    g = tuple(tuple(sym.add(sys.metric[i][j], sym.mul(c, f.h[i][j])) for j in range(n)) for i in range(n))
    a = tuple(sym.add(sys.alpha[i], sym.mul(c, f.beta[i])) for i in range(n))
    U = sym.add(sys.potential, sym.mul(c, f.V))
    return sys.replace(metric=g, alpha=a, potential=U, name=f"{sys.name}+{s:g}f")


@dataclass(frozen=True)
class LinearizationResult:
    fd_slope: float
    transform_value: float
    discrepancy: float
    relative: float


def linearization_check(sys: MPSystem, f: TensorTriple, x, y, steps: tuple[float, float] = (1e-2, 5e-3),
                        validate: bool = True) -> LinearizationResult:
    """Richardson-extrapolated central difference of ``s -> A_s(x, y)`` against
    ``1/2 int h(sdot, sdot) - int beta(sdot) - int V`` on the unperturbed geodesic."""
    h1, h2 = steps
    if validate:
        for s in (-h1, h1):
            perturbed(sys, f, s).validate()
    A = {}
    for s in (-h1, -h2, h2, h1):
        A[s] = mane_action(perturbed(sys, f, s), x, y)
    D1 = (A[h1] - A[-h1]) / (2 * h1)
    D2 = (A[h2] - A[-h2]) / (2 * h2)
    r = h1 / h2
    fd = (r * r * D2 - D1) / (r * r - 1)
    lin = TensorTriple(scaled_matrix(sym.const(0.5), f.h), tuple(sym.neg(b) for b in f.beta), sym.neg(f.V))
    _, extra, _ = ActionEvaluator(sys, [lin])(x, y)
    tv = float(extra[0])
    disc = abs(fd - tv)
    return LinearizationResult(float(fd), tv, disc, disc / max(abs(tv), 1e-300))


# ---------------------------------------------------------------------------
# Gauges

@dataclass(frozen=True, eq=False)
class GaugeData:
    """Boundary-fixing diffeomorphism ``f``, exact-form potential ``varphi`` and conformal ``mu``."""

    f: tuple[Expr, ...]
    varphi: Expr
    mu: Expr
    _inverse_hint: dict = field(default_factory=dict, compare=False)

    @classmethod
    def build(cls, dim: int, f=None, varphi: FieldLike = 0.0, mu: FieldLike = 1.0) -> "GaugeData":
        ff = as_exprs(f, dim) if f is not None else tuple(Var(i) for i in range(dim))
        return cls(ff, as_expr(varphi, dim), as_expr(mu, dim))

    @property
    def dim(self) -> int:
        return len(self.f)

    def check(self, sys: MPSystem, tol: float = 1e-10) -> None:
        n = self.dim
        cf = CompiledFields(list(self.f) + [self.varphi, self.mu], n)
        for x in boundary_samples(n, sys.radius, 64):
            v, _, _ = cf.jets(x, 0)
            if np.max(np.abs(v[:n] - x)) > tol:
                raise GeometryError(f"gauge map moves the boundary point {x.tolist()}")
            if abs(v[n]) > tol:
                raise GeometryError(f"varphi does not vanish at boundary point {x.tolist()}")
        for x in sys.sample_grid(9):
            v, gr, _ = cf.jets(x, 1)
            if not v[n + 1] > 0:
                raise GeometryError(f"mu is not positive at {x.tolist()}")
            if abs(np.linalg.det(gr[:n])) < 1e-10:
                raise GeometryError(f"gauge map Jacobian is singular at {x.tolist()}")

    def map(self, x) -> np.ndarray:
        cf = CompiledFields(list(self.f), self.dim)
        return cf.jets(np.asarray(x, float), 0)[0]

    def inverse(self, y, tol: float = 1e-14, max_iter: int = 200) -> np.ndarray:
        """Fixed-point solve of ``f(x) = y`` via ``x <- x - (f(x) - y)``."""
        y = np.asarray(y, float)
        cf = CompiledFields(list(self.f), self.dim)
        x = y.copy()
        for _ in range(max_iter):
            r = cf.jets(x, 0)[0] - y
            x = x - r
            if np.linalg.norm(r) <= tol:
                return x
        raise NumericalFailure("fixed-point inverse of the gauge map did not converge")


def interior_diffeomorphism(dim: int, radius: float, eps: float, direction: Sequence[float]) -> tuple[Expr, ...]:
    """``x + eps (R^2 - |x|^2)^2 w``: identity on the boundary with vanishing first derivative there."""
    r2 = sym.total(sym.power(Var(i), 2) for i in range(dim))
    b = sym.power(sym.sub(radius**2, r2), 2)
    return tuple(sym.add(Var(i), sym.mul(sym.const(eps * direction[i]), b)) for i in range(dim))


def gauge_apply(sys: MPSystem, gd: GaugeData, check: bool = True) -> MPSystem:
    """``(g, alpha, U) -> (f*g / mu, f*alpha + d varphi, mu (f*U - k) + k)``."""
    if check:
        gd.check(sys)
    n = sys.dim
    mp = {i: gd.f[i] for i in range(n)}
    Df = [[sym.diff(gd.f[a], i) for i in range(n)] for a in range(n)]  # Df[a][i] = d_i f^a
    gf = [[sym.substitute(sys.metric[a][b], mp) for b in range(n)] for a in range(n)]
    af = [sym.substitute(sys.alpha[a], mp) for a in range(n)]
    Uf = sym.substitute(sys.potential, mp)
    g2 = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(i, n):
            e = sym.total(sym.mul(sym.mul(Df[a][i], Df[b][j]), gf[a][b]) for a in range(n) for b in range(n))
            g2[i][j] = g2[j][i] = sym.div(e, gd.mu)
    a2 = tuple(sym.add(sym.total(sym.mul(Df[a][i], af[a]) for a in range(n)), sym.diff(gd.varphi, i))
               for i in range(n))
    U2 = sym.add(sym.mul(gd.mu, sym.sub(Uf, sys.energy)), sys.energy)
    return sys.replace(metric=tuple(tuple(r) for r in g2), alpha=a2, potential=U2, name=f"gauge({sys.name})")


# ---------------------------------------------------------------------------
# Boundary action tables

@dataclass(frozen=True, eq=False)
class ActionTable:
    angles: np.ndarray
    values: np.ndarray  # NaN on excluded (near-diagonal) entries

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["angle"] + [f"{a:.12f}" for a in self.angles])
        for a, row in zip(self.angles, self.values):
            w.writerow([f"{a:.12f}"] + ["" if np.isnan(v) else f"{v:.12e}" for v in row])
        return buf.getvalue()


def _angle_gap(a: float, b: float) -> float:
    d = abs(a - b) % (2 * np.pi)
    return min(d, 2 * np.pi - d)


def boundary_action_table(sys: MPSystem, angles: Sequence[float], min_separation: float = 0.2) -> ActionTable:
    """``A(x_i, x_j)`` for boundary points at the given polar angles (planar systems)."""
    if sys.dim != 2:
        raise ValueError("angle-indexed tables are planar only")
    angles = np.asarray(angles, float)
    if len(angles) == 0:
        raise ValueError("empty boundary grid")
    pts = sys.radius * np.stack([np.cos(angles), np.sin(angles)], -1)
    ev = ActionEvaluator(sys)
    vals = np.full((len(angles), len(angles)), np.nan)
    for i, x in enumerate(pts):
        for j, y in enumerate(pts):
            if _angle_gap(angles[i], angles[j]) >= min_separation:
                vals[i, j] = ev(x, y)[0]
    return ActionTable(angles, vals)
