"""Differential-geometry kernel on a coordinate ball: MP-systems, connection, Lorentz
force, symmetric differential, divergence, curvature and boundary convexity."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence, Union

import numpy as np

from .fieldexpr import CompiledFields, Expr, parse, to_source
from .fieldexpr import symbolic as sym

FieldLike = Union[str, Expr, float, int]


class GeometryError(ValueError):
    """Invalid geometric data: singular or indefinite metric, energy below the potential, ..."""


def as_expr(f: FieldLike, dim: int) -> Expr:
    if isinstance(f, str):
        return parse(f, dim)
    return sym.as_expr(f)


def as_exprs(fs: Sequence[FieldLike], dim: int) -> tuple[Expr, ...]:
    if len(fs) != dim:
        raise ValueError(f"expected {dim} components, got {len(fs)}")
    return tuple(as_expr(f, dim) for f in fs)


def as_matrix(rows, dim: int) -> tuple[tuple[Expr, ...], ...]:
    m = tuple(as_exprs(r, dim) for r in rows)
    if len(m) != dim:
        raise ValueError(f"expected a {dim}x{dim} matrix")
    for i in range(dim):
        for j in range(i):
            if m[i][j] != m[j][i]:
                raise GeometryError(f"tensor entries ({i + 1},{j + 1}) and ({j + 1},{i + 1}) differ")
    return m


def identity_matrix(dim: int) -> tuple[tuple[Expr, ...], ...]:
    return tuple(tuple(sym.ONE if i == j else sym.ZERO for j in range(dim)) for i in range(dim))


def scaled_matrix(factor: Expr, m) -> tuple[tuple[Expr, ...], ...]:
    return tuple(tuple(sym.mul(factor, e) for e in row) for row in m)


@dataclass(frozen=True, eq=False)
class MPSystem:
    """Metric, magnetic potential, scalar potential and energy on the ball ``|x| <= radius``."""

    dim: int
    radius: float
    metric: tuple[tuple[Expr, ...], ...]
    alpha: tuple[Expr, ...]
    potential: Expr
    energy: float
    name: str = "custom"
    params: dict = field(default_factory=dict)

    @classmethod
    def build(cls, dim: int, radius: float = 1.0, *, metric=None, conformal: FieldLike | None = None,
              alpha=None, potential: FieldLike = 0.0, energy: float = 0.5, name: str = "custom",
              params: dict | None = None) -> "MPSystem":
        if dim not in (2, 3):
            raise GeometryError(f"dimension must be 2 or 3, got {dim}")
        if radius <= 0:
            raise GeometryError("radius must be positive")
        if metric is not None and conformal is not None:
            raise ValueError("give either a full metric or a conformal factor")
        if metric is None:
            g = identity_matrix(dim)
            if conformal is not None:
                g = scaled_matrix(as_expr(conformal, dim), g)
        else:
            g = as_matrix(metric, dim)
        a = as_exprs(alpha, dim) if alpha is not None else tuple(sym.ZERO for _ in range(dim))
        return cls(dim, float(radius), g, a, as_expr(potential, dim), float(energy), name, dict(params or {}))

    def replace(self, **changes) -> "MPSystem":
        kw = dict(dim=self.dim, radius=self.radius, metric=self.metric, alpha=self.alpha,
                  potential=self.potential, energy=self.energy, name=self.name, params=self.params)
        kw.update(changes)
        return MPSystem(**kw)

    @cached_property
    def upper(self) -> list[tuple[int, int]]:
        return [(i, j) for i in range(self.dim) for j in range(i, self.dim)]

    @cached_property
    def field_exprs(self) -> list[Expr]:
        """Flat list ``[g_ij (i<=j)..., alpha_i..., U]``; the layout used by compiled kernels."""
        return [self.metric[i][j] for i, j in self.upper] + list(self.alpha) + [self.potential]

    @cached_property
    def fields(self) -> CompiledFields:
        return CompiledFields(self.field_exprs, self.dim)

    def jets(self, x, order: int = 2):
        """Metric, 1-form and potential with derivatives at ``x``.

        Returns ``(g, dg, ddg, a, da, dda, U, dU, ddU)`` with ``dg[k, i, j] = d_k g_ij`` and
        ``ddg[k, l, i, j] = d_k d_l g_ij`` (same convention for the 1-form).
        """
        n = self.dim
        x = np.asarray(x, dtype=float)
        if x.ndim == 2:
            v, gr, h = self.fields.jets_batch(x, order)
        else:
            v, gr, h = self.fields.jets(x, order)
        lead = v.shape[:-1]
        g = np.empty(lead + (n, n))
        dg = np.empty(lead + (n, n, n))
        ddg = np.empty(lead + (n, n, n, n))
        for p, (i, j) in enumerate(self.upper):
            g[..., i, j] = g[..., j, i] = v[..., p]
            dg[..., i, j] = dg[..., j, i] = gr[..., p, :]
            ddg[..., i, j] = ddg[..., j, i] = h[..., p, :, :]
        m = len(self.upper)
        a = v[..., m:m + n]
        da = np.swapaxes(gr[..., m:m + n, :], -1, -2).copy()
        dda = np.moveaxis(h[..., m:m + n, :, :], -3, -1).copy()
        return g, dg, ddg, a, da, dda, v[..., -1], gr[..., -1, :], h[..., -1, :, :]

    def metric_at(self, x) -> np.ndarray:
        return self.jets(x, 0)[0]

    def potential_at(self, x) -> float:
        return float(self.jets(x, 0)[6])

    def P(self, x) -> float:
        """``2(k - U(x))``: twice the kinetic energy available at ``x``."""
        return 2.0 * (self.energy - self.potential_at(x))

    def inside(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return float(self.radius**2 - x @ x) >= 0.0

    def sample_grid(self, per_axis: int = 9) -> np.ndarray:
        """Points of a Cartesian grid clipped to the closed ball, plus boundary samples."""
        n, R = self.dim, self.radius
        ax = np.linspace(-R, R, per_axis)
        pts = np.stack(np.meshgrid(*([ax] * n), indexing="ij"), -1).reshape(-1, n)
        pts = pts[np.einsum("ij,ij->i", pts, pts) <= R * R + 1e-12]
        return np.vstack([pts, boundary_samples(n, R, 4 * per_axis)])

    def validate(self, per_axis: int = 9) -> None:
        """Check metric positivity and ``k > max U`` on a sampling grid; raise :class:`GeometryError`."""
        for x in self.sample_grid(per_axis):
            g, *_rest, U, _dU, _ddU = self.jets(x, 0)
            if not np.all(np.isfinite(g)):
                raise GeometryError(f"metric not finite at x={x.tolist()}")
            lam = np.linalg.eigvalsh(g)
            if lam[0] <= 0:
                raise GeometryError(f"metric not positive definite at x={x.tolist()} (min eigenvalue {lam[0]:.3g})")
            if not self.energy > U:
                raise GeometryError(f"energy k={self.energy} not above potential U={U:.6g} at x={x.tolist()}")

    def describe(self) -> dict:
        return {
            "name": self.name,
            "dim": self.dim,
            "radius": self.radius,
            "metric": [[to_source(e) for e in row] for row in self.metric],
            "alpha": [to_source(e) for e in self.alpha],
            "potential": to_source(self.potential),
            "energy": self.energy,
        }


def boundary_samples(dim: int, radius: float, count: int) -> np.ndarray:
    if dim == 2:
        th = 2 * np.pi * np.arange(count) / count
        return radius * np.stack([np.cos(th), np.sin(th)], -1)
    # Fibonacci sphere
    i = np.arange(count) + 0.5
    z = 1 - 2 * i / count
    r = np.sqrt(1 - z * z)
    ph = np.pi * (1 + 5**0.5) * i
    return radius * np.stack([r * np.cos(ph), r * np.sin(ph), z], -1)


# ----------------------------------------------------------------------------
# Pointwise tensor algebra from jets

def inverse_metric(g: np.ndarray, x=None) -> np.ndarray:
    det = np.linalg.det(g)
    if not np.all(np.isfinite(det)) or np.any(np.abs(det) < 1e-300):
        where = "" if x is None else f" at x={np.asarray(x).tolist()}"
        raise GeometryError(f"singular metric{where}")
    return np.linalg.inv(g)


# The functions below accept optional leading batch axes on every argument.

def _first_kind(dg: np.ndarray) -> np.ndarray:
    """``F[l, j, k] = (d_j g_lk + d_k g_lj - d_l g_jk) / 2`` from ``dg[k, i, j] = d_k g_ij``."""
    return 0.5 * (np.swapaxes(dg, -3, -2) + np.moveaxis(dg, -3, -1) - dg)


def christoffel_from_jets(g: np.ndarray, dg: np.ndarray, x=None) -> np.ndarray:
    """``Gamma[i, j, k] = Gamma^i_jk`` from the metric and its first derivatives."""
    gi = inverse_metric(g, x)
    return np.einsum("...il,...ljk->...ijk", gi, _first_kind(dg))


def christoffel_derivative(g, dg, ddg, x=None) -> np.ndarray:
    """``dGamma[m, i, j, k] = d_m Gamma^i_jk``."""
    gi = inverse_metric(g, x)
    dgi = -np.einsum("...ia,...mab,...bl->...mil", gi, dg, gi)
    # ddg[m, a, i, j] = d_m d_a g_ij; differentiate the first-kind symbols in m
    dfirst = 0.5 * (np.swapaxes(ddg, -3, -2) + np.moveaxis(ddg, -3, -1) - ddg)
    return (np.einsum("...mil,...ljk->...mijk", dgi, _first_kind(dg))
            + np.einsum("...il,...mljk->...mijk", gi, dfirst))


def two_form(da: np.ndarray) -> np.ndarray:
    """``Omega_jl = d_j a_l - d_l a_j`` from ``da[k, i] = d_k a_i``."""
    return da - np.swapaxes(da, -1, -2)


def lorentz_from_jets(g, da, x=None) -> np.ndarray:
    """Matrix ``Y`` with ``(Y u, w)_g = Omega(u, w)``, i.e. ``Y^i_j = g^il Omega_jl``."""
    gi = inverse_metric(g, x)
    return gi @ np.swapaxes(two_form(da), -1, -2)


def lorentz_derivative(g, dg, da, dda, x=None) -> np.ndarray:
    """``dY[k, i, j] = d_k Y^i_j`` (coordinate derivative)."""
    gi = inverse_metric(g, x)
    dgi = -np.einsum("...ia,...kab,...bl->...kil", gi, dg, gi)
    om = two_form(da)
    # dda[k, j, l] = d_k d_j a_l
    dom = dda - np.swapaxes(dda, -1, -2)
    return np.einsum("...kil,...jl->...kij", dgi, om) + np.einsum("...il,...kjl->...kij", gi, dom)


def covariant_lorentz_derivative(g, dg, da, dda, x=None) -> np.ndarray:
    """``nY[k, i, j] = (nabla_k Y)^i_j``."""
    Y = lorentz_from_jets(g, da, x)
    G = christoffel_from_jets(g, dg, x)
    dY = lorentz_derivative(g, dg, da, dda, x)
    return dY + np.einsum("...ikm,...mj->...kij", G, Y) - np.einsum("...mkj,...im->...kij", G, Y)


def riemann_from_jets(g, dg, ddg, x=None) -> np.ndarray:
    """``Rm[i, j, k, l] = R^i_jkl`` with ``R(d_k, d_l) d_j = R^i_jkl d_i``."""
    G = christoffel_from_jets(g, dg, x)
    dG = christoffel_derivative(g, dg, ddg, x)
    # R^i_jkl = d_k G^i_lj - d_l G^i_kj + G^i_km G^m_lj - G^i_lm G^m_kj
    term = np.einsum("...kilj->...ijkl", dG)
    quad = np.einsum("...ikm,...mlj->...ijkl", G, G)
    return term - np.swapaxes(term, -1, -2) + quad - np.swapaxes(quad, -1, -2)


def sectional_from_jets(g, dg, ddg, v, w, x=None):
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    vv = np.einsum("...i,...ij,...j->...", v, g, v)
    ww = np.einsum("...i,...ij,...j->...", w, g, w)
    vw = np.einsum("...i,...ij,...j->...", v, g, w)
    area = vv * ww - vw**2
    if np.any(area <= 1e-14 * vv * ww) or np.any(area <= 0):
        raise GeometryError("degenerate plane: v and w are linearly dependent")
    Rm = riemann_from_jets(g, dg, ddg, x)
    # <R(v, w) w, v>
    Rvww = np.einsum("...ijkl,...j,...k,...l->...i", Rm, w, v, w)
    K = np.einsum("...i,...ij,...j->...", Rvww, g, v) / area
    return float(K) if np.ndim(K) == 0 else K


# ----------------------------------------------------------------------------
# Operations on systems

def christoffel(sys: MPSystem, x) -> np.ndarray:
    g, dg, *_ = sys.jets(x, 1)
    return christoffel_from_jets(g, dg, x)


def lorentz_force(sys: MPSystem, x) -> np.ndarray:
    g, _dg, _ddg, _a, da, *_ = sys.jets(x, 1)
    return lorentz_from_jets(g, da, x)


def energy(sys: MPSystem, x, v) -> float:
    g, *_rest, U, _dU, _ddU = sys.jets(x, 0)
    v = np.asarray(v, dtype=float)
    return 0.5 * float(v @ g @ v) + float(U)


def _covector_jets(u: Sequence[FieldLike], dim: int, x, order: int = 1):
    cf = CompiledFields(as_exprs(u, dim), dim)
    val, grad, hess = cf.jets(x, order)
    return val, grad.T.copy(), hess  # du[k, j] = d_k u_j


def covariant_derivative_covector(Gamma, u, du) -> np.ndarray:
    """``(nabla_i u)_j = d_i u_j - Gamma^k_ij u_k``."""
    return du - np.einsum("kij,k->ij", Gamma, u)


def sym_differential(sys: MPSystem, u: Sequence[FieldLike], x) -> np.ndarray:
    """``(d^s u)_ij = (nabla_i u_j + nabla_j u_i) / 2`` with respect to ``sys.metric``."""
    uv, du, _ = _covector_jets(u, sys.dim, x)
    nab = covariant_derivative_covector(christoffel(sys, x), uv, du)
    return 0.5 * (nab + nab.T)


def divergence(sys: MPSystem, w: Sequence[FieldLike], x) -> float:
    """``delta w = g^ij (d_i w_j - Gamma^k_ij w_k)``."""
    g, dg, *_ = sys.jets(x, 1)
    wv, dw, _ = _covector_jets(w, sys.dim, x)
    nab = covariant_derivative_covector(christoffel_from_jets(g, dg, x), wv, dw)
    return float(np.einsum("ij,ij->", inverse_metric(g, x), nab))


def sectional_curvature(sys: MPSystem, x, v, w) -> float:
    g, dg, ddg, *_ = sys.jets(x, 2)
    return sectional_from_jets(g, dg, ddg, v, w, x)


def inward_normal(sys: MPSystem, x) -> np.ndarray:
    """Inward ``g``-unit normal to the sphere ``|x| = R`` at ``x``."""
    x = np.asarray(x, dtype=float)
    g = sys.metric_at(x)
    nu = -np.linalg.solve(g, x)  # g^{-1} d(R^2 - |x|^2) / 2
    return nu / np.sqrt(nu @ g @ nu)


def second_fundamental_form(sys: MPSystem, x, v) -> float:
    """``Lambda(x, v) = -(nabla^2 rho)(v, v) / |d rho|_g`` for ``rho = R^2 - |x|^2`` (inward normal)."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    g, dg, *_ = sys.jets(x, 1)
    Gamma = christoffel_from_jets(g, dg, x)
    drho = -2.0 * x
    hess = -2.0 * np.eye(sys.dim) - np.einsum("kij,k->ij", Gamma, drho)
    norm = np.sqrt(drho @ inverse_metric(g, x) @ drho)
    return float(-(v @ hess @ v) / norm)


def convexity_margin(sys: MPSystem, x, v, tol: float = 1e-8) -> float:
    """``Lambda(x, v) - [(Y v, nu)_g - dU(nu)]`` for ``v`` tangent to the boundary sphere."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if abs(float(x @ x) - sys.radius**2) > 1e-9 * sys.radius**2:
        raise GeometryError(f"x={x.tolist()} is not on the boundary sphere")
    if abs(float(x @ v)) > tol * np.linalg.norm(x) * max(np.linalg.norm(v), 1.0):
        raise GeometryError("v is not tangent to the boundary")
    g, dg, _ddg, _a, da, _dda, _U, dU, _ = sys.jets(x, 1)
    nu = inward_normal(sys, x)
    Y = lorentz_from_jets(g, da, x)
    return second_fundamental_form(sys, x, v) - (float((Y @ v) @ g @ nu) - float(dU @ nu))


def tangent_energy_vectors(sys: MPSystem, x, count: int) -> np.ndarray:
    """Sample of ``S^k(dM)`` at boundary point ``x``: tangent vectors with ``E = k``."""
    x = np.asarray(x, dtype=float)
    g = sys.metric_at(x)
    P = sys.P(x)
    nu = inward_normal(sys, x)
    basis = _orthonormal_complement(g, nu)
    if sys.dim == 2:
        dirs = [basis[0], -basis[0]]
    else:
        th = 2 * np.pi * np.arange(count) / count
        dirs = [np.cos(t) * basis[0] + np.sin(t) * basis[1] for t in th]
    return np.sqrt(P) * np.array(dirs)


def _orthonormal_complement(g: np.ndarray, nu: np.ndarray) -> list[np.ndarray]:
    """``g``-orthonormal basis of the ``g``-orthogonal complement of the unit vector ``nu``."""
    n = len(nu)
    out = []
    for e in np.eye(n):
        w = e - (e @ g @ nu) * nu
        for b in out:
            w = w - (w @ g @ b) * b
        nrm = np.sqrt(max(w @ g @ w, 0.0))
        if nrm > 1e-8:
            out.append(w / nrm)
        if len(out) == n - 1:
            break
    return out


def min_convexity_margin(sys: MPSystem, boundary_count: int = 32, directions: int = 8) -> float:
    worst = np.inf
    for x in boundary_samples(sys.dim, sys.radius, boundary_count):
        for v in tangent_energy_vectors(sys, x, directions):
            worst = min(worst, convexity_margin(sys, x, v))
    return float(worst)
