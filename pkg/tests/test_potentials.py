import numpy as np
import pytest

from mpray import catalog
from mpray.fieldexpr import CompiledFields
from mpray.flow import Flow
from mpray.geometry import MPSystem, sym_differential
from mpray.potentials import (DiagramCheck, MagneticPotentialPair, PotentialTriple, d1, d2, dM, diagram_residual,
                              phi_small, phi_small_preimage, potential_norm, random_potential)
from mpray.quadrature import boundary_fan, random_rays, ray_state
from mpray.reduction import reduce
from mpray.transform import MagneticPair, RayTransform, TensorTriple, magnetic_ray

X = [0.3, -0.4]


def triple_at(f: TensorTriple, x=X):
    return f.at(x)


def test_d1_of_scalar_is_exact_form(systems):
    for name in ("SYS-E", "SYS-X"):
        h, beta, V = triple_at(d1(systems[name], PotentialTriple.build(2, phi="x1^2*x2")))
        assert np.all(h == 0) and V == 0
        np.testing.assert_allclose(beta, [2 * X[0] * X[1], X[0] ** 2])


def test_d1_without_field_is_symmetric_differential(systems):
    sys = systems["SYS-C"]
    u = ["x2^2", "x1*x2"]
    h, beta, V = triple_at(d1(sys, PotentialTriple.build(2, u=u)))
    np.testing.assert_allclose(h, sym_differential(sys, u, X), atol=1e-14)
    assert np.all(beta == 0) and V == 0


def test_d1_potential_row(systems):
    # SYS-U with u = x1 dx2: -(dU, u) = -0.2 x1 x2
    _, _, V = triple_at(d1(systems["SYS-U"], PotentialTriple.build(2, u=[0, "x1"])))
    assert V == pytest.approx(-0.2 * X[0] * X[1])


def test_d2_examples(systems):
    w = PotentialTriple.build(2, u=["x2", "x1^2"], phi="x1")
    for a, b in zip(triple_at(d2(systems["SYS-B"], w)), triple_at(d1(systems["SYS-B"], w))):
        np.testing.assert_array_equal(a, b)
    flat_k1 = MPSystem.build(2, energy=1.0)
    h, beta, V = triple_at(d2(flat_k1, PotentialTriple.build(2, eta=1)))
    np.testing.assert_allclose(h, -0.5 * np.eye(2))
    assert np.all(beta == 0) and V == 1


@pytest.mark.parametrize("name", ["SYS-B", "SYS-U", "SYS-X", "SYS-BU"])
def test_d1_is_derivative_along_the_flow(systems, name):
    """``d/dt [u(sdot) + phi]`` equals ``d1(w)`` evaluated on ``(sigma, sdot)``; this pins the sign of ``Y``."""
    sys = systems[name]
    u, phi = ["x2+x1^2", "x1*x2"], "x1-x2^2"
    f = d1(sys, PotentialTriple.build(2, u=u, phi=phi))
    tr = Flow(sys).run(*ray_state(sys, 0.8, 0.4))
    ts = np.linspace(0.1, tr.exit.tau - 0.1, 7)
    uf = lambda x: np.array([x[1] + x[0] ** 2, x[0] * x[1]])
    F = lambda t: (lambda s: uf(s[:2]) @ s[2:4] + s[0] - s[1] ** 2)(tr.at([t])[0])
    h = 1e-4
    for t in ts:
        s = tr.at([t])[0]
        fd = (F(t + h) - F(t - h)) / (2 * h)
        assert f.evaluate(s[None, :2], s[None, 2:4])[0] == pytest.approx(fd, abs=1e-7)


@pytest.mark.parametrize("name", ["SYS-B", "SYS-U", "SYS-C"])
def test_transform_of_potential_vanishes(systems, name, rng):
    sys = systems[name]
    ws = [random_potential(sys, rng) for _ in range(3)]
    assert all(w.vanishes_on_boundary(sys) for w in ws)
    vals, _ = RayTransform(sys, [d2(sys, w) for w in ws]).on_fan(boundary_fan(sys, 8, 8))
    assert np.max(np.abs(vals)) <= 1e-7


def test_dM_examples(systems, rng):
    b = systems["SYS-B"]
    mb = reduce(b)
    p = MagneticPotentialPair(tuple(TensorTriple.build(2, beta=["x2^2", "x1*x2"]).beta), TensorTriple.build(2).V)
    hG, _ = dM(mb, p).at(X)
    np.testing.assert_allclose(hG, sym_differential(b, ["x2^2", "x1*x2"], X), atol=1e-14)
    const = MPSystem.build(2, conformal="2.5", alpha=["-0.1*x2", "0.1*x1"], potential="0.1*x1")
    mc = reduce(const)
    for path_a, path_b in [("direct", "conformal")]:
        a, c = dM(mc, p, path_a), dM(mc, p, path_b)
        for pa, pc in zip(a.at(X), c.at(X)):
            np.testing.assert_allclose(pa, pc, atol=1e-13)
    u = systems["SYS-U"]
    mu = reduce(u)
    w = random_potential(u, rng)
    pair = dM(mu, phi_small(u, w))
    for x, v in random_rays(u, 6, rng):
        assert abs(magnetic_ray(mu, pair, x, v / u.P(x))) <= 1e-7


def test_dM_paths_agree(systems):
    for name in ("SYS-U", "SYS-C", "SYS-X"):
        sys = systems[name]
        msys = reduce(sys)
        w = random_potential(sys, np.random.default_rng(1), boundary_vanishing=False)
        p = phi_small(sys, w)
        a, b = dM(msys, p, "direct"), dM(msys, p, "conformal")
        for x in ([0.1, 0.2], [-0.5, 0.4]):
            for pa, pb in zip(a.at(x), b.at(x)):
                np.testing.assert_allclose(pa, pb, atol=1e-12)
    with pytest.raises(ValueError):
        dM(reduce(systems["SYS-E"]), p, "sideways")


def values(exprs, x=X):
    return CompiledFields(list(exprs), 2).jets(np.asarray(x, float), 0)[0]


def test_phi_small_examples(systems):
    u = systems["SYS-U"]
    p = phi_small(u, PotentialTriple.build(2, eta="x1"))
    assert np.all(values(list(p.u) + [p.phi]) == 0)
    b = systems["SYS-B"]
    w = PotentialTriple.build(2, u=["x2", "x1"], phi="x1^2")
    p = phi_small(b, w)
    np.testing.assert_allclose(values(list(p.u) + [p.phi]), [X[1], X[0], X[0] ** 2])
    p = phi_small(u, w)
    P = u.P(X)
    np.testing.assert_allclose(values(p.u), [P * X[1], P * X[0]])
    back = phi_small_preimage(u, p, eta="x2")
    np.testing.assert_allclose(values(list(back.u) + [back.phi, back.eta]), [X[1], X[0], X[0] ** 2, X[1]])


def test_diagram_examples(systems, rng):
    e = systems["SYS-E"]
    w = random_potential(e, rng, boundary_vanishing=False)
    assert diagram_residual(e, w, X) <= 1e-10
    u = systems["SYS-U"]
    msys = reduce(u)
    pts = rng.uniform(-0.65, 0.65, (50, 2))
    for _ in range(5):
        chk = DiagramCheck(u, random_potential(u, rng, boundary_vanishing=False), msys)
        assert max(chk(x) for x in pts) <= 1e-8
    chk = DiagramCheck(u, PotentialTriple.build(2, eta="x1*x2+1"), msys)
    assert max(chk(x) for x in pts[:10]) <= 1e-10
    for path in ("direct", "conformal"):
        assert diagram_residual(systems["SYS-X"], w, X, path=path) <= 1e-10


def test_potential_norm(systems):
    e = systems["SYS-E"]
    assert potential_norm(e, PotentialTriple.build(2)) == 0
    # phi = 1 on the unit disk: norm sqrt(pi)
    assert potential_norm(e, PotentialTriple.build(2, phi=1)) == pytest.approx(np.sqrt(np.pi), rel=1e-12)
