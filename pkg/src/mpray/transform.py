"""MP-ray transform on tensor triples, magnetic ray transform on pairs, the reduction map
between them and the L2 boundedness constants."""

from __future__ import annotations

import csv
import io
from itertools import product
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .fieldexpr import CompiledFields, Expr, Var, to_source
from .fieldexpr import symbolic as sym
from .flow import DEFAULT_ATOL, DEFAULT_RTOL, Channel, Flow, TrappedRayError
from .geometry import FieldLike, MPSystem, as_expr, as_exprs, as_matrix, inverse_metric, scaled_matrix
from .quadrature import BoundaryFan, PhaseQuadrature, boundary_fan, phase_quadrature
from .reduction import MagneticSystem, energy_factor, reduce

__all__ = [
    "BoundaryFan", "MagneticPair", "RayTransform", "TensorTriple", "boundedness_check", "kernel_generator",
    "l2_norm_boundary", "l2_norm_triple", "magnetic_ray", "mp_ray", "phi_map", "phi_preimage",
    "random_polynomial", "random_triple", "reduction_identity_residual", "sinogram_csv",
]


def _zero_matrix(n):
    return tuple(tuple(sym.ZERO for _ in range(n)) for _ in range(n))


@dataclass(frozen=True, eq=False)
class TensorTriple:
    """``[h, beta, V]``: symmetric 2-tensor, 1-form and scalar fields."""

    h: tuple[tuple[Expr, ...], ...]
    beta: tuple[Expr, ...]
    V: Expr

    @classmethod
    def build(cls, dim: int, h=None, beta=None, V: FieldLike = 0.0) -> "TensorTriple":
        hh = as_matrix(h, dim) if h is not None else _zero_matrix(dim)
        bb = as_exprs(beta, dim) if beta is not None else tuple(sym.ZERO for _ in range(dim))
        return cls(hh, bb, as_expr(V, dim))

    @classmethod
    def zero(cls, dim: int) -> "TensorTriple":
        return cls.build(dim)

    @property
    def dim(self) -> int:
        return len(self.beta)

    def scaled(self, c) -> "TensorTriple":
        c = sym.as_expr(c)
        return TensorTriple(scaled_matrix(c, self.h), tuple(sym.mul(c, b) for b in self.beta), sym.mul(c, self.V))

    def __add__(self, other: "TensorTriple") -> "TensorTriple":
        n = self.dim
        return TensorTriple(
            tuple(tuple(sym.add(self.h[i][j], other.h[i][j]) for j in range(n)) for i in range(n)),
            tuple(sym.add(a, b) for a, b in zip(self.beta, other.beta)),
            sym.add(self.V, other.V),
        )

    def __sub__(self, other: "TensorTriple") -> "TensorTriple":
        return self + other.scaled(-1.0)

    @cached_property
    def _upper(self):
        n = self.dim
        return [(i, j) for i in range(n) for j in range(i, n)]

    @cached_property
    def compiled(self) -> CompiledFields:
        return CompiledFields([self.h[i][j] for i, j in self._upper] + list(self.beta) + [self.V], self.dim)

    def at(self, x) -> tuple[np.ndarray, np.ndarray, float]:
        n = self.dim
        vals = self.compiled.jets(x, 0)[0]
        h = np.empty((n, n))
        for p, (i, j) in enumerate(self._upper):
            h[i, j] = h[j, i] = vals[p]
        m = len(self._upper)
        return h, vals[m:m + n].copy(), float(vals[-1])

    def evaluate(self, X, V) -> np.ndarray:
        """``h(v, v) + beta(v) + V`` at each phase point (rows of ``X`` and ``V``)."""
        X = np.atleast_2d(np.asarray(X, float))
        V = np.atleast_2d(np.asarray(V, float))
        n = self.dim
        vals = self.compiled.jets_batch(X, 0)[0]
        m = len(self._upper)
        out = vals[:, -1] + np.einsum("ni,ni->n", vals[:, m:m + n], V)
        for p, (i, j) in enumerate(self._upper):
            out += (1.0 if i == j else 2.0) * vals[:, p] * V[:, i] * V[:, j]
        return out

    def channel(self, weight: str = "none") -> Channel:
        return Channel(self.h, self.beta, self.V, weight)

    def describe(self) -> dict:
        return {"h": [[to_source(e) for e in r] for r in self.h], "beta": [to_source(e) for e in self.beta],
                "V": to_source(self.V)}


@dataclass(frozen=True, eq=False)
class MagneticPair:
    """``[h, beta]`` on the magnetic side."""

    h: tuple[tuple[Expr, ...], ...]
    beta: tuple[Expr, ...]

    @classmethod
    def build(cls, dim: int, h=None, beta=None) -> "MagneticPair":
        t = TensorTriple.build(dim, h, beta)
        return cls(t.h, t.beta)

    @property
    def dim(self) -> int:
        return len(self.beta)

    def as_triple(self) -> TensorTriple:
        return TensorTriple(self.h, self.beta, sym.ZERO)

    def at(self, x) -> tuple[np.ndarray, np.ndarray]:
        h, b, _ = self.as_triple().at(x)
        return h, b


# ---------------------------------------------------------------------------
# Ray transforms

class RayTransform:
    """Integrates several triples along each ray in one pass (extra ODE components)."""

    def __init__(self, sys: MPSystem, triples: Sequence[TensorTriple], weight: str = "none",
                 rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL):
        self.sys = sys
        self.triples = list(triples)
        chans = [t.channel(weight) for t in self.triples]
        self.flow = Flow(sys, chans, rtol=rtol, atol=atol)

    def __call__(self, x, v) -> tuple[np.ndarray, float]:
        traj = self.flow.run(x, v)
        if traj.exit is None:
            raise TrappedRayError(f"ray from x={np.asarray(x).tolist()} did not exit before t_max")
        return traj.integrals.copy(), traj.exit.tau

    def on_fan(self, fan: BoundaryFan) -> tuple[np.ndarray, np.ndarray]:
        vals = np.empty((len(fan), len(self.triples)))
        tau = np.empty(len(fan))
        for k in range(len(fan)):
            vals[k], tau[k] = self(fan.x[k], fan.v[k])
        return vals, tau


def mp_ray(sys: MPSystem, f: TensorTriple, x, v, **kw) -> float:
    """``int_0^tau h(sdot, sdot) + beta(sdot) + V dt`` along the MP-geodesic from ``(x, v)``."""
    vals, _ = RayTransform(sys, [f], **kw)(x, v)
    return float(vals[0])


def _magnetic_system(msys) -> MPSystem:
    return msys.system if isinstance(msys, MagneticSystem) else msys


def magnetic_ray(msys: MagneticSystem | MPSystem, p: MagneticPair, x, w, **kw) -> float:
    """Magnetic ray transform along the unit-speed magnetic geodesic from ``(x, w)``."""
    return mp_ray(_magnetic_system(msys), p.as_triple(), x, w, **kw)


def phi_map(sys: MPSystem, f: TensorTriple) -> MagneticPair:
    """``[h, beta, V] -> [P h + V g, beta]``."""
    P = energy_factor(sys)
    n = sys.dim
    h = tuple(tuple(sym.add(sym.mul(P, f.h[i][j]), sym.mul(f.V, sys.metric[i][j])) for j in range(n))
              for i in range(n))
    return MagneticPair(h, f.beta)


def phi_preimage(sys: MPSystem, p: MagneticPair) -> TensorTriple:
    """``[h, beta] -> [h / P, beta, 0]``, a right inverse of :func:`phi_map`."""
    P = energy_factor(sys)
    return TensorTriple(tuple(tuple(sym.div(e, P) for e in row) for row in p.h), p.beta, sym.ZERO)


def kernel_generator(sys: MPSystem, eta: FieldLike) -> TensorTriple:
    """``[-eta g, 0, eta P]``, spanning the kernel of :func:`phi_map`."""
    e = as_expr(eta, sys.dim)
    return TensorTriple(scaled_matrix(sym.neg(e), sys.metric), tuple(sym.ZERO for _ in range(sys.dim)),
                        sym.mul(e, energy_factor(sys)))


def reduction_identity_residual(sys: MPSystem, f: TensorTriple, x, v, msys: MagneticSystem | None = None,
                                **kw) -> float:
    """``|I f(x, v) - I_M Phi(f)(x, v / P(x))|``."""
    msys = msys or reduce(sys, check=False)
    lhs = mp_ray(sys, f, x, v, **kw)
    rhs = magnetic_ray(msys, phi_map(sys, f), x, np.asarray(v) / sys.P(x), **kw)
    return abs(lhs - rhs)


# ---------------------------------------------------------------------------
# Norms and Lemma-type bounds

def pointwise_norm2(sys: MPSystem, f: TensorTriple, x) -> float:
    """``|h|_g^2 + |beta|_g^2 + V^2`` at ``x``."""
    g = sys.metric_at(x)
    gi = inverse_metric(g, x)
    h, b, V = f.at(x)
    return float(np.einsum("ia,jb,ij,ab->", gi, gi, h, h) + b @ gi @ b + V * V)


def l2_norm_triple(sys: MPSystem, f: TensorTriple, quad: PhaseQuadrature | None = None) -> float:
    quad = quad or phase_quadrature(sys, n_fiber=2)
    vals = np.array([pointwise_norm2(sys, f, x) for x in quad.spatial_x])
    return float(np.sqrt(np.sum(vals * quad.spatial_weights)))


def l2_norm_boundary(fan: BoundaryFan, values) -> float:
    """``(int |F|^2 dmu_k)^(1/2)`` over the fan."""
    return float(np.sqrt(fan.integrate(np.asarray(values) ** 2)))


@dataclass(frozen=True)
class BoundednessReport:
    lhs: float
    rhs: float
    C: float
    C_tilde: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs


def boundedness_check(sys: MPSystem, f: TensorTriple, fan: BoundaryFan | None = None,
                      quad: PhaseQuadrature | None = None) -> BoundednessReport:
    """``int (I f)^2 dmu_k`` against ``C_tilde int_{S^k M} f^2 dSigma_k``.

    ``C = max tau`` over the fan and ``C_tilde = C max_M P^(1/2)``.
    """
    fan = fan or boundary_fan(sys)
    quad = quad or phase_quadrature(sys)
    vals, tau = RayTransform(sys, [f]).on_fan(fan)
    lhs = fan.integrate(vals[:, 0] ** 2)
    C = float(tau.max())
    pmax = max(max(sys.P(x) for x in quad.spatial_x), max(sys.P(x) for x in sys.sample_grid(9)))
    Ct = C * np.sqrt(pmax)
    rhs = Ct * quad.integrate(f.evaluate(quad.x, quad.v) ** 2)
    return BoundednessReport(float(lhs), float(rhs), C, float(Ct))


# ---------------------------------------------------------------------------
# Seeded test fields

def random_polynomial(dim: int, rng: np.random.Generator, degree: int = 2, scale: float = 1.0) -> Expr:
    """Polynomial of total degree ``<= degree`` with uniform coefficients in ``[-scale, scale]``."""
    terms = []
    for powers in product(range(degree + 1), repeat=dim):
        if sum(powers) > degree:
            continue
        c = float(rng.uniform(-scale, scale))
        mono: Expr = sym.const(round(c, 6))
        for i, p in enumerate(powers):
            if p:
                mono = sym.mul(mono, sym.power(Var(i), p))
        terms.append(mono)
    return sym.total(terms)


def random_triple(dim: int, rng: np.random.Generator, degree: int = 2, scale: float = 1.0) -> TensorTriple:
    h = [[None] * dim for _ in range(dim)]
    for i in range(dim):
        for j in range(i, dim):
            h[i][j] = h[j][i] = random_polynomial(dim, rng, degree, scale)
    beta = [random_polynomial(dim, rng, degree, scale) for _ in range(dim)]
    return TensorTriple(tuple(tuple(r) for r in h), tuple(beta), random_polynomial(dim, rng, degree, scale))


def sinogram_csv(fan: BoundaryFan, values, tau=None) -> str:
    """One row per fan ray; ``values`` may hold one column per triple."""
    vals = np.asarray(values, float)
    if vals.ndim == 1:
        vals = vals[:, None]
    names = ["value"] if vals.shape[1] == 1 else [f"value{k + 1}" for k in range(vals.shape[1])]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["boundary_angle", "direction_angle"] + names + ([] if tau is None else ["tau"]))
    for k in range(len(fan)):
        row = [f"{fan.boundary_angle[k]:.12f}", f"{fan.direction_angle[k]:.12f}"]
        row += [f"{float(v):.15e}" for v in vals[k]]
        if tau is not None:
            row.append(f"{float(tau[k]):.15e}")
        w.writerow(row)
    return buf.getvalue()
