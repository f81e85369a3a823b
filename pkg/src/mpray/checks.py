"""Numerical checks of the identities the toolkit implements.

Each check returns :class:`Check` records. The ``verify`` subcommand and the acceptance
tests both build on these functions.
"""

from __future__ import annotations

import zlib
from dataclasses import asdict, dataclass, field

import numpy as np

from . import action as act
from .fieldexpr import symbolic as sym
from .flow import Flow
from .geometry import MPSystem, min_convexity_margin
from .measures import curvature_bound, santalo_residual
from .potentials import DiagramCheck, d2, potential_norm, random_potential
from .quadrature import boundary_fan, phase_quadrature, random_rays
from .reduction import energy_factor, reduce
from .transform import (RayTransform, TensorTriple, boundedness_check, kernel_generator, phi_map,
                        random_polynomial, random_triple)


@dataclass
class Check:
    name: str
    value: float
    tolerance: float
    passed: bool
    comparison: str = "<="
    details: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return asdict(self)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name}: {self.value:.3e} {self.comparison} {self.tolerance:.3e}"


def _le(name: str, value: float, tol: float, **details) -> Check:
    value = float(value)
    return Check(name, value, tol, bool(value <= tol), "<=", details)


def rng_for(seed: int, name: str) -> np.random.Generator:
    """Independent stream per check so adding a check never shifts the others."""
    return np.random.default_rng([seed, zlib.crc32(name.encode())])


# ---------------------------------------------------------------------------

def geometry_valid(sys: MPSystem) -> Check:
    sys.validate()
    margin = min_convexity_margin(sys)
    return Check("convexity_margin", margin, 0.0, bool(margin > 0), ">")


def energy_conservation(sys: MPSystem, seed: int = 42, rays: int = 100, tol: float = 1e-9,
                        rtol: float = 1e-10, atol: float = 1e-12) -> Check:
    flow = Flow(sys, rtol=rtol, atol=atol)
    worst = 0.0
    for x, v in random_rays(sys, rays, rng_for(seed, "energy"), max_angle=1.5):
        worst = max(worst, flow.run(x, v).energy_drift)
    return _le("energy_conservation", worst, tol, rays=rays)


def reduction_identity(sys: MPSystem, seed: int = 42, rays: int = 20, triples: int = 5,
                       tol: float = 1e-6) -> Check:
    rng = rng_for(seed, "reduction")
    fs = [random_triple(sys.dim, rng) for _ in range(triples)]
    msys = reduce(sys)
    mp = RayTransform(sys, fs)
    mag = RayTransform(msys.system, [phi_map(sys, f).as_triple() for f in fs])
    worst = 0.0
    for x, v in random_rays(sys, rays, rng):
        a, _ = mp(x, v)
        b, _ = mag(x, v / sys.P(x))
        worst = max(worst, float(np.max(np.abs(a - b))))
    return _le("reduction_identity", worst, tol, rays=rays, triples=triples)


def kernel_vanishing(sys: MPSystem, seed: int = 42, etas: int = 5, fan=(8, 8), tol: float = 1e-8) -> Check:
    rng = rng_for(seed, "kernel")
    fs = []
    for k in range(etas):
        eta = random_polynomial(sys.dim, rng, degree=3)
        if k % 2:
            eta = sym.call("sin", eta)
        fs.append(kernel_generator(sys, eta))
    vals, _ = RayTransform(sys, fs).on_fan(boundary_fan(sys, *fan))
    return _le("kernel_vanishing", np.max(np.abs(vals)), tol, etas=etas, fan=list(fan))


def potential_vanishing(sys: MPSystem, seed: int = 42, triples: int = 5, fan=(8, 8), tol: float = 1e-6) -> Check:
    rng = rng_for(seed, "potential")
    ws = [random_potential(sys, rng) for _ in range(triples)]
    norms = np.array([potential_norm(sys, w) for w in ws])
    vals, _ = RayTransform(sys, [d2(sys, w) for w in ws]).on_fan(boundary_fan(sys, *fan))
    scaled = np.max(np.abs(vals) / (1.0 + norms[None, :]))
    return _le("potential_vanishing", scaled, tol, triples=triples, fan=list(fan))


def commuting_diagram(sys: MPSystem, seed: int = 42, triples: int = 5, points: int = 50, tol: float = 1e-8,
                      path: str = "direct") -> Check:
    rng = rng_for(seed, "diagram")
    msys = reduce(sys)
    n, R = sys.dim, sys.radius
    pts = []
    while len(pts) < points:
        x = rng.uniform(-R, R, n)
        if x @ x < (0.95 * R) ** 2:
            pts.append(x)
    worst = 0.0
    for _ in range(triples):
        chk = DiagramCheck(sys, random_potential(sys, rng, boundary_vanishing=False), msys, path)
        worst = max(worst, max(chk(x) for x in pts))
    return _le(f"commuting_diagram[{path}]", worst, tol, triples=triples, points=points)


def santalo_integrands(sys: MPSystem) -> list[tuple[str, TensorTriple]]:
    n = sys.dim
    P = energy_factor(sys)
    one = TensorTriple.build(n, V=1.0)
    h = [[sym.ZERO] * n for _ in range(n)]
    h[0][0] = sym.div(1.0, P)
    second = TensorTriple(tuple(tuple(r) for r in h), tuple(sym.ZERO for _ in range(n)),
                          TensorTriple.build(n, V="1+x1").V)
    third = TensorTriple.build(n, h=[["0.2" if i == j else "0.3*x1" for j in range(n)] for i in range(n)],
                               beta=["x2", "x1^2"] + ["x1*x2"] * (n - 2), V="exp(0.5*x1*x2)")
    return [("f=1", one), ("f=1+x1+(v1)^2/P", second), ("f=poly", third)]


def santalo(sys: MPSystem, fan=(8, 8), phase=(32, 64, 32), tol: float = 5e-3, shrink: float = 3.0,
            floor: float = 1e-9, refine: bool = True) -> list[Check]:
    """Relative gap at the given grids and, optionally, its reduction under 2x refinement.

    The shrink factor is only meaningful while the coarse gap is above round-off; gaps
    already below ``floor`` count as converged.
    """
    out = []
    f0 = boundary_fan(sys, *fan)
    q0 = phase_quadrature(sys, *phase)
    if refine:
        f1 = boundary_fan(sys, *(2 * c for c in fan))
        q1 = phase_quadrature(sys, *(2 * c for c in phase))
    for label, f in santalo_integrands(sys):
        r0 = santalo_residual(sys, f, f0, q0)
        out.append(_le(f"santalo_gap[{label}]", r0.relative_gap, tol, lhs=r0.lhs, rhs=r0.rhs))
        if refine:
            r1 = santalo_residual(sys, f, f1, q1)
            if r0.relative_gap <= floor:
                out.append(Check(f"santalo_refinement[{label}]", r1.relative_gap, floor,
                                 bool(r1.relative_gap <= floor), "<=",
                                 {"coarse_gap": r0.relative_gap, "at_floor": True}))
            else:
                ratio = r0.relative_gap / max(r1.relative_gap, 1e-300)
                out.append(Check(f"santalo_refinement[{label}]", ratio, shrink, bool(ratio >= shrink), ">=",
                                 {"coarse_gap": r0.relative_gap, "fine_gap": r1.relative_gap}))
    return out


def _boundary_pairs(rng: np.random.Generator, count: int, min_sep: float = 0.3):
    out = []
    for _ in range(count):
        a = rng.uniform(0, 2 * np.pi)
        b = a + rng.uniform(min_sep, 2 * np.pi - min_sep)
        out.append((a, b))
    return out


def _point(sys: MPSystem, angle: float) -> np.ndarray:
    return sys.radius * np.array([np.cos(angle), np.sin(angle)])


def action_equality(sys: MPSystem, seed: int = 42, pairs: int = 10, tol: float = 1e-6) -> Check:
    rng = rng_for(seed, "action")
    msys = reduce(sys)
    ev = act.ActionEvaluator(sys)
    evm = act.ActionEvaluator(msys.system)
    worst = 0.0
    for a, b in _boundary_pairs(rng, pairs):
        x, y = _point(sys, a), _point(sys, b)
        worst = max(worst, abs(ev(x, y)[0] - evm(x, y)[0]))
    return _le("action_equality", worst, tol, pairs=pairs)


def linearization(sys: MPSystem, seed: int = 42, perturbations: int = 5, pairs: int = 5,
                  tol: float = 1e-4) -> Check:
    rng = rng_for(seed, "linearization")
    fs = [random_triple(sys.dim, rng, scale=0.5) for _ in range(perturbations)]
    prs = _boundary_pairs(rng, pairs)
    worst = 0.0
    for f in fs:
        for a, b in prs:
            r = act.linearization_check(sys, f, _point(sys, a), _point(sys, b))
            worst = max(worst, r.relative)
    return _le("linearization", worst, tol, perturbations=perturbations, pairs=pairs)


def elementary_gauges(sys: MPSystem) -> dict[str, act.GaugeData]:
    n, R = sys.dim, sys.radius
    r2 = " + ".join(f"x{i + 1}^2" for i in range(n))
    bump = f"({R!r}^2 - ({r2}))"
    w = [0.6, -0.4, 0.3][:n]
    return {
        "exact_form": act.GaugeData.build(n, varphi=f"0.3*{bump}*(1+x1)"),
        "conformal": act.GaugeData.build(n, mu=f"1+0.1*{bump}^2"),
        "diffeomorphism": act.GaugeData.build(n, f=act.interior_diffeomorphism(n, R, 0.1, w)),
    }


def gauge_invariance(sys: MPSystem, angles: int = 6, tol: float = 1e-5) -> list[Check]:
    grid = 2 * np.pi * np.arange(angles) / angles + 0.1
    base = act.boundary_action_table(sys, grid)
    out = []
    for label, gd in elementary_gauges(sys).items():
        other = act.boundary_action_table(act.gauge_apply(sys, gd), grid)
        out.append(_le(f"gauge_invariance[{label}]", np.nanmax(np.abs(other.values - base.values)), tol,
                       angles=angles))
    return out


def curvature(sys: MPSystem, fan=(16, 16)) -> Check:
    cb = curvature_bound(sys, *fan)
    return Check("curvature_functional", cb.value, 4.0, cb.verdict, "<=", cb.as_dict())


def boundedness(sys: MPSystem, seed: int = 42, triples: int = 3, fan=(8, 8), phase=(32, 64, 32)) -> Check:
    rng = rng_for(seed, "boundedness")
    f0 = boundary_fan(sys, *fan)
    q0 = phase_quadrature(sys, *phase)
    worst = 0.0
    for f in [TensorTriple.build(sys.dim, V=1.0)] + [random_triple(sys.dim, rng) for _ in range(triples)]:
        rep = boundedness_check(sys, f, f0, q0)
        if not rep.holds:
            return Check("l2_boundedness", rep.lhs / rep.rhs, 1.0, False, "<", {"lhs": rep.lhs, "rhs": rep.rhs})
        worst = max(worst, rep.lhs / rep.rhs if rep.rhs > 0 else 0.0)
    return Check("l2_boundedness", worst, 1.0, bool(worst < 1.0), "<", {"triples": triples + 1})


def run_all(sys: MPSystem, seed: int = 42, quick: bool = False, fan=(8, 8), phase=(32, 64, 32),
            curvature_fan=(16, 16), rtol: float = 1e-10, atol: float = 1e-12) -> list[Check]:
    """The full battery used by ``mpray verify``; ``quick`` trims sample counts and skips refinement."""
    q = quick
    fan, phase = tuple(fan), tuple(phase)
    checks = [geometry_valid(sys)]
    checks.append(energy_conservation(sys, seed, rays=20 if q else 100, rtol=rtol, atol=atol))
    checks.append(reduction_identity(sys, seed, rays=5 if q else 20, triples=2 if q else 5))
    checks.append(kernel_vanishing(sys, seed, etas=2 if q else 5, fan=fan))
    checks.append(potential_vanishing(sys, seed, triples=2 if q else 5, fan=fan))
    checks.append(commuting_diagram(sys, seed, triples=2 if q else 5, points=10 if q else 50))
    checks.extend(santalo(sys, fan=fan, phase=phase, refine=not q))
    checks.append(boundedness(sys, seed, triples=1 if q else 3, fan=fan, phase=phase))
    if sys.dim == 2:
        checks.append(action_equality(sys, seed, pairs=3 if q else 10))
        checks.append(linearization(sys, seed, perturbations=1 if q else 2, pairs=1 if q else 2))
        checks.extend(gauge_invariance(sys, angles=3 if q else 5))
    checks.append(curvature(sys, (8, 8) if q else tuple(curvature_fan)))
    return checks
