"""Phase-space and boundary integrals, the Santalo formula check and the curvature
functional ``k(M, 2(k - U) g, alpha)``."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .flow import Flow, TrappedRayError
from .geometry import (MPSystem, covariant_lorentz_derivative, lorentz_from_jets, sectional_from_jets,
                       _orthonormal_complement)
from .quadrature import BoundaryFan, PhaseQuadrature, boundary_fan, phase_quadrature, _frame, _unit_sphere_rule
from .reduction import MagneticSystem, reduce
from .transform import RayTransform, TensorTriple

PhaseFunction = Union[TensorTriple, Callable[[np.ndarray, np.ndarray], np.ndarray]]


def _evaluate(F: PhaseFunction, X, V) -> np.ndarray:
    if isinstance(F, TensorTriple):
        return F.evaluate(X, V)
    return np.asarray(F(X, V), dtype=float)


def phase_integral(sys: MPSystem, F: PhaseFunction, quad: PhaseQuadrature | None = None) -> float:
    """``int_{S^k M} F dSigma_k``."""
    quad = quad or phase_quadrature(sys)
    return quad.integrate(_evaluate(F, quad.x, quad.v))


def boundary_integral(sys: MPSystem, G, fan: BoundaryFan | None = None) -> float:
    """``int_{d+ S^k M} G dmu_k``; ``G`` is a callable on ``(x, v)`` arrays, a value array, or ``"tau"``."""
    fan = fan or boundary_fan(sys)
    if isinstance(G, str):
        if G != "tau":
            raise ValueError(f"unknown fan function {G!r}")
        flow = Flow(sys)
        vals = np.empty(len(fan))
        for k in range(len(fan)):
            tr = flow.run(fan.x[k], fan.v[k])
            if tr.exit is None:
                raise TrappedRayError("fan ray did not exit")
            vals[k] = tr.exit.tau
    elif callable(G):
        vals = np.asarray(G(fan.x, fan.v), dtype=float)
    else:
        vals = np.asarray(G, dtype=float)
    return fan.integrate(vals)


@dataclass(frozen=True)
class SantaloResult:
    lhs: float
    rhs: float
    relative_gap: float
    grids: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"lhs": self.lhs, "rhs": self.rhs, "relative_gap": self.relative_gap, "grids": self.grids}


def santalo_residual(sys: MPSystem, f: TensorTriple, fan: BoundaryFan | None = None,
                     quad: PhaseQuadrature | None = None) -> SantaloResult:
    """Both sides of ``int_{S^k M} f dSigma_k = int_{d+} (int_0^tau P^(1/2) f dt) P^-1 dmu_k``."""
    fan = fan or boundary_fan(sys)
    quad = quad or phase_quadrature(sys)
    lhs = phase_integral(sys, f, quad)
    vals, _ = RayTransform(sys, [f], weight="sqrtP").on_fan(fan)
    rhs = float(np.sum(vals[:, 0] * fan.santalo_weights))
    scale = max(abs(lhs), abs(rhs))
    gap = abs(lhs - rhs) / scale if scale > 0 else 0.0
    grids = {"fan": list(fan.shape), "phase": list(quad.shape)}
    return SantaloResult(float(lhs), rhs, float(gap), grids)


def fiber_measure(g: np.ndarray, radius: float, count: int = 256) -> float:
    """Area of ``{v : |v|_g = radius}`` from a coordinate parametrization (Gram determinant)."""
    n = len(g)
    F = _frame(g)
    if n == 2:
        th = 2 * np.pi * np.arange(count) / count
        dv = radius * np.stack([-np.sin(th), np.cos(th)], -1) @ F.T
        return float(np.sum(np.sqrt(np.einsum("ki,ij,kj->k", dv, g, dv))) * 2 * np.pi / count)
    dirs, w = _unit_sphere_rule(3, count)
    z = dirs[:, 2]
    ph = np.arctan2(dirs[:, 1], dirs[:, 0])
    s = np.sqrt(1 - z * z)
    dz = np.stack([-z / s * np.cos(ph), -z / s * np.sin(ph), np.ones_like(z)], -1) * radius @ F.T
    dp = np.stack([-s * np.sin(ph), s * np.cos(ph), np.zeros_like(z)], -1) * radius @ F.T
    a = np.einsum("ki,ij,kj->k", dz, g, dz)
    b = np.einsum("ki,ij,kj->k", dz, g, dp)
    c = np.einsum("ki,ij,kj->k", dp, g, dp)
    return float(np.sum(np.sqrt(a * c - b * b) * w))


def fiber_measure_ratio(sys: MPSystem, x) -> tuple[float, float]:
    """``(|S^k_x|_g / |S^G_x|_G, P^((n-1)/2))``; the two agree."""
    g = sys.metric_at(x)
    P = sys.P(x)
    return fiber_measure(g, np.sqrt(P)) / fiber_measure(P * g, 1.0), P ** ((sys.dim - 1) / 2)


# ---------------------------------------------------------------------------
# Curvature functional

def k_mu_batch(msys: MagneticSystem | MPSystem, X, V, n_w: int = 16) -> np.ndarray:
    """``sup_w 2K_G + (Y_G w, v)_G^2 + (n+3)|Y_G w|_G^2 - 2((nabla_w Y_G) v, w)_G`` over
    ``G``-unit ``w`` orthogonal to the ``G``-unit ``v`` (exactly ``w = +-v_perp`` in 2D).

    ``X`` and ``V`` hold one phase point per row.
    """
    s = msys.system if isinstance(msys, MagneticSystem) else msys
    n = s.dim
    X = np.atleast_2d(np.asarray(X, float))
    V = np.atleast_2d(np.asarray(V, float))
    G, dG, ddG, _a, da, dda, *_ = s.jets(X, 2)
    V = V / np.sqrt(np.einsum("ni,nij,nj->n", V, G, V))[:, None]
    Y = lorentz_from_jets(G, da)
    nY = covariant_lorentz_derivative(G, dG, da, dda)
    if n == 2:
        rot = np.array([[0.0, -1.0], [1.0, 0.0]])
        w0 = np.linalg.solve(G, (V @ rot.T)[..., None])[..., 0]
        w0 /= np.sqrt(np.einsum("ni,nij,nj->n", w0, G, w0))[:, None]
        ws = [w0, -w0]
    else:
        bases = [_orthonormal_complement(Gk, vk) for Gk, vk in zip(G, V)]
        b0 = np.array([b[0] for b in bases])
        b1 = np.array([b[1] for b in bases])
        th = 2 * np.pi * np.arange(n_w) / n_w
        ws = [np.cos(t) * b0 + np.sin(t) * b1 for t in th]
    K = sectional_from_jets(G, dG, ddG, V, ws[0])
    best = np.full(len(X), -np.inf)
    for w in ws:
        Yw = np.einsum("nij,nj->ni", Y, w)
        dYv = np.einsum("nk,nkij,nj->ni", w, nY, V)
        val = (2 * K + np.einsum("ni,nij,nj->n", Yw, G, V) ** 2
               + (n + 3) * np.einsum("ni,nij,nj->n", Yw, G, Yw)
               - 2 * np.einsum("ni,nij,nj->n", dYv, G, w))
        best = np.maximum(best, val)
    return best


def k_mu(msys: MagneticSystem | MPSystem, x, v, n_w: int = 16) -> float:
    """Single-point version of :func:`k_mu_batch`."""
    return float(k_mu_batch(msys, [x], [v], n_w)[0])


@dataclass(frozen=True)
class CurvatureBound:
    value: float
    max_length: float
    max_k_mu: float
    verdict: bool  # value <= 4
    grids: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"value": self.value, "max_length": self.max_length, "max_k_mu": self.max_k_mu,
                "verdict_le_4": self.verdict, "grids": self.grids}


_GL5 = np.polynomial.legendre.leggauss(5)


def curvature_bound(sys: MPSystem, n_boundary: int = 16, n_directions: int = 16, n_w: int = 16) -> CurvatureBound:
    """Fan estimate of ``sup_gamma T_gamma int_0^T k_mu^+ ds`` over unit-speed magnetic geodesics of
    the reduced system (a lower estimate of the true supremum)."""
    msys = reduce(sys)
    s = msys.system
    n = s.dim
    fan = boundary_fan(s, n_boundary, n_directions)
    flow = Flow(s)
    best = 0.0
    Tmax = 0.0
    kmax = -np.inf
    nodes, weights = _GL5
    for k in range(len(fan)):
        tr = flow.run(fan.x[k], fan.v[k])
        if tr.exit is None:
            raise TrappedRayError("magnetic fan ray did not exit")
        T = tr.exit.tau
        a, b = tr.times[:-1, None], tr.times[1:, None]
        tq = (0.5 * (a + b) + 0.5 * (b - a) * nodes).ravel()
        st = tr.at(tq)
        vals = k_mu_batch(msys, st[:, :n], st[:, n:2 * n], n_w)
        kmax = max(kmax, float(vals.max()))
        wq = (0.5 * (b - a) * weights).ravel()
        total = float(wq @ np.maximum(vals, 0.0))
        Tmax = max(Tmax, T)
        best = max(best, T * total)
    grids = {"fan": [n_boundary, n_directions], "w": n_w if n == 3 else 2}
    return CurvatureBound(float(best), float(Tmax), float(kmax), bool(best <= 4.0), grids)
