"""Quadrature rules on the energy sphere bundle and on its inward boundary part.

Measures (``P = 2(k - U)``, ``n`` the dimension):

* phase space: ``dSigma_k = dvol_g x dsigma_k`` where ``dsigma_k`` is the ``g``-area of the
  fiber sphere of ``g``-radius ``sqrt(P)``, i.e. ``P^((n-1)/2) domega``;
* boundary: ``dmu_k = (v, nu_k)_g dSigma_k^(2n-2)`` with ``nu_k = sqrt(P) nu``, which for
  ``v = sqrt(P)(cos(theta) nu + sin(theta) e)`` is ``P^((n+1)/2) cos(theta) domega dA_g``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import MPSystem, _orthonormal_complement, inward_normal


@dataclass(frozen=True, eq=False)
class BoundaryFan:
    """Inward boundary phase points with ``dmu_k`` weights.

    ``boundary_angle`` is the polar angle of ``x`` (azimuth in 3D) and ``direction_angle``
    the angle between ``v`` and the inward normal (signed in 2D).
    """

    x: np.ndarray
    v: np.ndarray
    weights: np.ndarray
    P: np.ndarray
    boundary_angle: np.ndarray
    direction_angle: np.ndarray
    shape: tuple[int, int]

    def __len__(self) -> int:
        return len(self.weights)

    @property
    def santalo_weights(self) -> np.ndarray:
        """``P(x)^-1 dmu_k``: the weight multiplying the ray integral in the Santalo formula."""
        return self.weights / self.P

    def integrate(self, values) -> float:
        return float(np.sum(np.asarray(values) * self.weights))


@dataclass(frozen=True, eq=False)
class PhaseQuadrature:
    """Product rule on ``S^k M``: spatial nodes times fiber directions."""

    x: np.ndarray  # (N, n) expanded
    v: np.ndarray  # (N, n)
    weights: np.ndarray  # (N,)
    spatial_x: np.ndarray
    spatial_weights: np.ndarray  # dvol_g
    fiber_measure: np.ndarray  # sum of fiber weights per spatial node
    shape: tuple[int, ...]

    def integrate(self, values) -> float:
        return float(np.sum(np.asarray(values) * self.weights))


def _unit_sphere_rule(dim: int, count: int):
    """Directions and weights on the unit ``S^(dim-1)``: trapezoid (2D) or GL x trapezoid (3D)."""
    if dim == 2:
        th = 2 * np.pi * np.arange(count) / count
        return np.stack([np.cos(th), np.sin(th)], -1), np.full(count, 2 * np.pi / count)
    nz = max(count // 2, 2)
    z, wz = np.polynomial.legendre.leggauss(nz)
    ph = 2 * np.pi * np.arange(count) / count
    Z, PH = np.meshgrid(z, ph, indexing="ij")
    r = np.sqrt(1 - Z**2)
    dirs = np.stack([r * np.cos(PH), r * np.sin(PH), Z], -1).reshape(-1, 3)
    w = (wz[:, None] * np.full(count, 2 * np.pi / count)[None, :]).reshape(-1)
    return dirs, w


def _frame(g: np.ndarray) -> np.ndarray:
    """Columns form a ``g``-orthonormal basis."""
    L = np.linalg.cholesky(g)
    return np.linalg.inv(L).T


def phase_quadrature(sys: MPSystem, n_radial: int = 32, n_angular: int = 64, n_fiber: int = 32) -> PhaseQuadrature:
    n, R = sys.dim, sys.radius
    r, wr = np.polynomial.legendre.leggauss(n_radial)
    r = 0.5 * R * (r + 1)
    wr = 0.5 * R * wr
    dirs, wd = _unit_sphere_rule(n, n_angular)
    X = (r[:, None, None] * dirs[None, :, :]).reshape(-1, n)
    W0 = (wr[:, None] * r[:, None] ** (n - 1) * wd[None, :]).reshape(-1)
    fdirs, fw = _unit_sphere_rule(n, n_fiber)
    xs, vs, ws, fm, wvol = [], [], [], [], []
    for x, w0 in zip(X, W0):
        g = sys.metric_at(x)
        P = sys.P(x)
        dv = w0 * np.sqrt(np.linalg.det(g))
        F = _frame(g)
        scale = P ** ((n - 1) / 2)
        xs.append(np.repeat(x[None], len(fw), 0))
        vs.append(np.sqrt(P) * fdirs @ F.T)
        ws.append(dv * scale * fw)
        fm.append(scale * fw.sum())
        wvol.append(dv)
    return PhaseQuadrature(np.vstack(xs), np.vstack(vs), np.concatenate(ws), X, np.array(wvol), np.array(fm),
                           (n_radial, n_angular, n_fiber))


def _boundary_nodes(dim: int, R: float, count: int):
    """Boundary points with coordinate tangent frames and parameter weights."""
    if dim == 2:
        ph = 2 * np.pi * np.arange(count) / count
        x = R * np.stack([np.cos(ph), np.sin(ph)], -1)
        tang = [np.array([[-np.sin(p)], [np.cos(p)]]) * R for p in ph]
        return x, tang, np.full(count, 2 * np.pi / count), ph
    nz = max(count // 2, 2)
    z, wz = np.polynomial.legendre.leggauss(nz)
    ph = 2 * np.pi * np.arange(count) / count
    xs, tang, w, ang = [], [], [], []
    for zi, wzi in zip(z, wz):
        s = np.sqrt(1 - zi * zi)
        for p in ph:
            xs.append(R * np.array([s * np.cos(p), s * np.sin(p), zi]))
            # d/dz and d/dphi of the sphere parametrization
            dz = R * np.array([-zi / s * np.cos(p), -zi / s * np.sin(p), 1.0])
            dp = R * np.array([-s * np.sin(p), s * np.cos(p), 0.0])
            tang.append(np.stack([dz, dp], -1))
            w.append(wzi * 2 * np.pi / count)
            ang.append(p)
    return np.array(xs), tang, np.array(w), np.array(ang)


def boundary_fan(sys: MPSystem, n_boundary: int = 32, n_directions: int = 32) -> BoundaryFan:
    """Product rule on the inward boundary bundle.

    Boundary parameter: periodic trapezoid (GL in height times trapezoid in 3D).
    Direction angle from the normal: midpoint rule on ``(-pi/2, pi/2)`` (2D) or on the polar
    angle in ``(0, pi/2)`` times trapezoid in azimuth (3D); grazing rays are never sampled.
    """
    if n_boundary < 1 or n_directions < 1:
        raise ValueError("fan counts must be positive")
    n = sys.dim
    xb, tang, wb, angb = _boundary_nodes(n, sys.radius, n_boundary)
    if n == 2:
        th = -np.pi / 2 + (np.arange(n_directions) + 0.5) * np.pi / n_directions
        wth = np.full(n_directions, np.pi / n_directions)
    else:
        th = (np.arange(n_directions) + 0.5) * (np.pi / 2) / n_directions
        psi = 2 * np.pi * np.arange(2 * n_directions) / (2 * n_directions)
    xs, vs, ws, Ps, ba, da = [], [], [], [], [], []
    for x, T, w0, a in zip(xb, tang, wb, angb):
        g = sys.metric_at(x)
        P = sys.P(x)
        nu = inward_normal(sys, x)
        dA = w0 * np.sqrt(np.linalg.det(T.T @ g @ T))
        if n == 2:
            e = _orthonormal_complement(g, nu)[0]
            # orient e along increasing boundary angle
            if e @ g @ T[:, 0] < 0:
                e = -e
            for t, wt in zip(th, wth):
                vs.append(np.sqrt(P) * (np.cos(t) * nu + np.sin(t) * e))
                ws.append(P ** ((n + 1) / 2) * np.cos(t) * wt * dA)
                xs.append(x)
                Ps.append(P)
                ba.append(a)
                da.append(t)
        else:
            e1, e2 = _orthonormal_complement(g, nu)
            dth = (np.pi / 2) / n_directions
            dpsi = 2 * np.pi / len(psi)
            for t in th:
                for p in psi:
                    u = np.cos(t) * nu + np.sin(t) * (np.cos(p) * e1 + np.sin(p) * e2)
                    vs.append(np.sqrt(P) * u)
                    ws.append(P ** ((n + 1) / 2) * np.cos(t) * np.sin(t) * dth * dpsi * dA)
                    xs.append(x)
                    Ps.append(P)
                    ba.append(a)
                    da.append(t)
    return BoundaryFan(np.array(xs), np.array(vs), np.array(ws), np.array(Ps), np.array(ba), np.array(da),
                       (n_boundary, n_directions))


def fan_from_angles(sys: MPSystem, pairs) -> BoundaryFan:
    """Planar fan from explicit ``(boundary_angle, direction_angle)`` pairs (unit weights)."""
    if sys.dim != 2:
        raise ValueError("angle-indexed fans are planar only")
    xs, vs, Ps, ba, da = [], [], [], [], []
    for a, t in pairs:
        x, v = ray_state(sys, a, t)
        xs.append(x)
        vs.append(v)
        Ps.append(sys.P(x))
        ba.append(a)
        da.append(t)
    m = len(xs)
    if m == 0:
        raise ValueError("empty fan")
    return BoundaryFan(np.array(xs), np.array(vs), np.ones(m), np.array(Ps), np.array(ba), np.array(da), (m, 1))


def ray_state(sys: MPSystem, boundary_angle: float, direction_angle: float):
    """Planar inward boundary state at the given angles (direction measured from the normal)."""
    x = sys.radius * np.array([np.cos(boundary_angle), np.sin(boundary_angle)])
    g = sys.metric_at(x)
    nu = inward_normal(sys, x)
    e = _orthonormal_complement(g, nu)[0]
    if e @ g @ np.array([-np.sin(boundary_angle), np.cos(boundary_angle)]) < 0:
        e = -e
    v = np.sqrt(sys.P(x)) * (np.cos(direction_angle) * nu + np.sin(direction_angle) * e)
    return x, v


def random_rays(sys: MPSystem, count: int, rng: np.random.Generator, max_angle: float = 1.45):
    """Seeded inward boundary states with direction angles in ``[-max_angle, max_angle]``."""
    out = []
    n = sys.dim
    for _ in range(count):
        if n == 2:
            out.append(ray_state(sys, rng.uniform(0, 2 * np.pi), rng.uniform(-max_angle, max_angle)))
            continue
        x = rng.normal(size=3)
        x *= sys.radius / np.linalg.norm(x)
        g = sys.metric_at(x)
        nu = inward_normal(sys, x)
        e1, e2 = _orthonormal_complement(g, nu)
        t, p = rng.uniform(0, max_angle), rng.uniform(0, 2 * np.pi)
        u = np.cos(t) * nu + np.sin(t) * (np.cos(p) * e1 + np.sin(p) * e2)
        out.append((x, np.sqrt(sys.P(x)) * u))
    return out
