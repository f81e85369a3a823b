"""Potential operators ``d1``, ``d2`` (MP side) and ``d_M`` (magnetic side), the map between
their arguments, and the pointwise commuting-diagram residual.

Covector Lorentz action: ``Y(u)_i = -Y^j_i u_j``, so the middle row ``-Y(u) + dphi`` equals
``dphi + Y^T u``.  This sign makes ``d/dt [u(sdot) + phi] = d1(w)`` along the flow.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fieldexpr import Expr, Var
from .fieldexpr import symbolic as sym
from .geometry import FieldLike, MPSystem, as_expr, as_exprs, divergence, scaled_matrix
from .reduction import MagneticSystem, energy_factor
from .transform import MagneticPair, TensorTriple, phi_map, random_polynomial


@dataclass(frozen=True, eq=False)
class PotentialTriple:
    """``[u, phi, eta]``: covector, scalar, scalar."""

    u: tuple[Expr, ...]
    phi: Expr
    eta: Expr

    @classmethod
    def build(cls, dim: int, u=None, phi: FieldLike = 0.0, eta: FieldLike = 0.0) -> "PotentialTriple":
        uu = as_exprs(u, dim) if u is not None else tuple(sym.ZERO for _ in range(dim))
        return cls(uu, as_expr(phi, dim), as_expr(eta, dim))

    @property
    def dim(self) -> int:
        return len(self.u)

    def vanishes_on_boundary(self, sys: MPSystem, count: int = 64, tol: float = 1e-10) -> bool:
        from .fieldexpr import CompiledFields
        from .geometry import boundary_samples

        cf = CompiledFields(list(self.u) + [self.phi], self.dim)
        return all(np.max(np.abs(cf.jets(x, 0)[0])) <= tol for x in boundary_samples(self.dim, sys.radius, count))


@dataclass(frozen=True, eq=False)
class MagneticPotentialPair:
    u: tuple[Expr, ...]
    phi: Expr

    @property
    def dim(self) -> int:
        return len(self.u)


# ---------------------------------------------------------------------------
# Symbolic tensor calculus

def christoffel_exprs(metric) -> list[list[list[Expr]]]:
    """``Gamma^k_ij`` as expressions (index order ``[k][i][j]``)."""
    n = len(metric)
    gi = sym.mat_inv(metric)
    dg = [[[sym.diff(metric[i][j], k) for j in range(n)] for i in range(n)] for k in range(n)]
    first = [[[sym.mul(0.5, sym.sub(sym.add(dg[i][l][j], dg[j][l][i]), dg[l][i][j])) for j in range(n)]
              for i in range(n)] for l in range(n)]
    return [[[sym.total(sym.mul(gi[k][l], first[l][i][j]) for l in range(n)) for j in range(n)]
             for i in range(n)] for k in range(n)]


def sym_differential_exprs(metric, u) -> tuple[tuple[Expr, ...], ...]:
    n = len(u)
    G = christoffel_exprs(metric)
    out = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(i, n):
            e = sym.mul(0.5, sym.add(sym.diff(u[j], i), sym.diff(u[i], j)))
            e = sym.sub(e, sym.total(sym.mul(G[k][i][j], u[k]) for k in range(n)))
            out[i][j] = out[j][i] = e
    return tuple(tuple(r) for r in out)


def lorentz_on_covector_exprs(metric, alpha, u, scale: Expr | None = None) -> tuple[Expr, ...]:
    """``-Y(u)_i = Y^j_i u_j = g^jl Omega_il u_j`` (optionally divided by ``scale``)."""
    n = len(u)
    gi = sym.mat_inv(metric)
    om = [[sym.sub(sym.diff(alpha[l], i), sym.diff(alpha[i], l)) for l in range(n)] for i in range(n)]
    out = []
    for i in range(n):
        e = sym.total(sym.mul(u[j], sym.total(sym.mul(gi[j][l], om[i][l]) for l in range(n))) for j in range(n))
        out.append(sym.div(e, scale) if scale is not None else e)
    return tuple(out)


def _grad_pairing(metric, f: Expr, u) -> Expr:
    """``(df, u)_g = g^ij d_i f u_j``."""
    n = len(u)
    gi = sym.mat_inv(metric)
    df = sym.gradient(f, n)
    return sym.total(sym.mul(sym.mul(gi[i][j], df[i]), u[j]) for i in range(n) for j in range(n))


# ---------------------------------------------------------------------------
# Operators

def d1(sys: MPSystem, w: PotentialTriple) -> TensorTriple:
    """``[d^s u, -Y(u) + dphi, -(dU, u)_g]``."""
    n = sys.dim
    h = sym_differential_exprs(sys.metric, w.u)
    yu = lorentz_on_covector_exprs(sys.metric, sys.alpha, w.u)
    beta = tuple(sym.add(sym.diff(w.phi, i), yu[i]) for i in range(n))
    V = sym.neg(_grad_pairing(sys.metric, sys.potential, w.u))
    return TensorTriple(h, beta, V)


def d2_correction(sys: MPSystem, eta: Expr) -> TensorTriple:
    """``eta [-g/2, 0, k - U]``."""
    return TensorTriple(scaled_matrix(sym.mul(-0.5, eta), sys.metric), tuple(sym.ZERO for _ in range(sys.dim)),
                        sym.mul(eta, sym.sub(sys.energy, sys.potential)))


def d2(sys: MPSystem, w: PotentialTriple) -> TensorTriple:
    return d1(sys, w) + d2_correction(sys, w.eta)


def phi_small(sys: MPSystem, w: PotentialTriple) -> MagneticPotentialPair:
    """``[u, phi, eta] -> [P u, phi]``."""
    P = energy_factor(sys)
    return MagneticPotentialPair(tuple(sym.mul(P, e) for e in w.u), w.phi)


def phi_small_preimage(sys: MPSystem, p: MagneticPotentialPair, eta: FieldLike = 0.0) -> PotentialTriple:
    P = energy_factor(sys)
    return PotentialTriple(tuple(sym.div(e, P) for e in p.u), p.phi, as_expr(eta, sys.dim))


def dM(msys: MagneticSystem, p: MagneticPotentialPair, path: str = "direct") -> MagneticPair:
    """``[d_G^s u, -Y_G(u) + dphi]``.

    ``path="direct"`` differentiates with the Christoffel symbols of ``G`` itself;
    ``path="conformal"`` uses ``d_G^s u = P d_g^s(u/P) - (dU, u/P)_g g`` and ``Y_G = Y_g / P``
    with the parent data.
    """
    n = msys.dim
    if path == "direct":
        G = msys.system.metric
        h = sym_differential_exprs(G, p.u)
        yu = lorentz_on_covector_exprs(G, msys.system.alpha, p.u)
    elif path == "conformal":
        parent = msys.parent
        P = msys.factor
        uP = tuple(sym.div(e, P) for e in p.u)
        dsg = sym_differential_exprs(parent.metric, uP)
        corr = _grad_pairing(parent.metric, parent.potential, uP)
        h = tuple(tuple(sym.sub(sym.mul(P, dsg[i][j]), sym.mul(corr, parent.metric[i][j])) for j in range(n))
                  for i in range(n))
        yu = lorentz_on_covector_exprs(parent.metric, parent.alpha, p.u, scale=P)
    else:
        raise ValueError(f"unknown path {path!r}")
    beta = tuple(sym.add(sym.diff(p.phi, i), yu[i]) for i in range(n))
    return MagneticPair(h, beta)


def _pair_difference(a: MagneticPair, b: MagneticPair, x) -> float:
    ha, ba = a.at(x)
    hb, bb = b.at(x)
    return float(np.sqrt(np.sum((ha - hb) ** 2) + np.sum((ba - bb) ** 2)))


def diagram_residual(sys: MPSystem, w: PotentialTriple, x, msys: MagneticSystem | None = None,
                     path: str = "direct") -> float:
    """Pointwise norm of ``Phi(d2 w) - d_M(phi w)`` at ``x``."""
    from .reduction import reduce

    msys = msys or reduce(sys, check=False)
    return _pair_difference(phi_map(sys, d2(sys, w)), dM(msys, phi_small(sys, w), path), x)


class DiagramCheck:
    """Builds both sides once and evaluates the residual at many points."""

    def __init__(self, sys: MPSystem, w: PotentialTriple, msys: MagneticSystem, path: str = "direct"):
        self.left = phi_map(sys, d2(sys, w))
        self.right = dM(msys, phi_small(sys, w), path)

    def __call__(self, x) -> float:
        return _pair_difference(self.left, self.right, x)


def remark_residual(sys: MPSystem, u, X) -> np.ndarray:
    """``delta(P^(n/2) u)`` sampled at the points ``X``."""
    n = sys.dim
    u = as_exprs(u, n)
    Pn = sym.power(energy_factor(sys), n / 2)
    w = [sym.mul(Pn, e) for e in u]
    return np.array([divergence(sys, w, x) for x in np.atleast_2d(X)])


def bump(sys: MPSystem) -> Expr:
    """``R^2 - |x|^2``, vanishing on the boundary sphere."""
    r2 = sym.total(sym.power(Var(i), 2) for i in range(sys.dim))
    return sym.sub(sys.radius**2, r2)


def random_potential(sys: MPSystem, rng: np.random.Generator, degree: int = 2, scale: float = 1.0,
                     boundary_vanishing: bool = True) -> PotentialTriple:
    """Seeded polynomial ``[u, phi, eta]``; ``u`` and ``phi`` carry the boundary bump when requested."""
    n = sys.dim
    b = bump(sys) if boundary_vanishing else sym.ONE
    u = tuple(sym.mul(b, random_polynomial(n, rng, degree, scale)) for _ in range(n))
    phi = sym.mul(b, random_polynomial(n, rng, degree, scale))
    eta = random_polynomial(n, rng, degree, scale)
    return PotentialTriple(u, phi, eta)


def potential_norm(sys: MPSystem, w: PotentialTriple, n_radial: int = 16, n_angular: int = 32) -> float:
    """``(int_M |u|_g^2 + phi^2 + eta^2 dvol_g)^(1/2)``."""
    from .fieldexpr import CompiledFields
    from .geometry import inverse_metric
    from .quadrature import phase_quadrature

    quad = phase_quadrature(sys, n_radial, n_angular, 2)
    n = sys.dim
    vals = CompiledFields(list(w.u) + [w.phi, w.eta], n).jets_batch(quad.spatial_x, 0)[0]
    total = 0.0
    for k, x in enumerate(quad.spatial_x):
        gi = inverse_metric(sys.metric_at(x), x)
        u = vals[k, :n]
        total += (u @ gi @ u + vals[k, n] ** 2 + vals[k, n + 1] ** 2) * quad.spatial_weights[k]
    return float(np.sqrt(total))
