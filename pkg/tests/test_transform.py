import numpy as np
import scipy.integrate
import pytest

from mpray import catalog
from mpray.quadrature import boundary_fan, fan_from_angles, phase_quadrature, random_rays, ray_state
from mpray.reduction import reduce
from mpray.transform import (MagneticPair, RayTransform, TensorTriple, boundedness_check, kernel_generator,
                             l2_norm_boundary, l2_norm_triple, magnetic_ray, mp_ray, phi_map, phi_preimage,
                             random_triple, reduction_identity_residual, sinogram_csv)

PSI = "1-x1^2-x2^2"
DPSI = ["-2*x1", "-2*x2"]


def same_pair(a: MagneticPair, b: MagneticPair, x, tol=1e-12):
    (ha, ba), (hb, bb) = a.at(x), b.at(x)
    return np.allclose(ha, hb, atol=tol) and np.allclose(ba, bb, atol=tol)


def same_triple(a: TensorTriple, b: TensorTriple, x, tol=1e-12):
    return all(np.allclose(p, q, atol=tol) for p, q in zip(a.at(x), b.at(x)))


def test_flat_ray_examples(systems):
    e = systems["SYS-E"]
    assert mp_ray(e, TensorTriple.build(2, V=1), [-1, 0], [1, 0]) == pytest.approx(2.0, abs=1e-12)
    assert mp_ray(e, TensorTriple.build(2, h=[[1, 0], [0, 1]]), [-1, 0], [1, 0]) == pytest.approx(2.0, abs=1e-12)


@pytest.mark.parametrize("name", ["SYS-E", "SYS-B", "SYS-U", "SYS-C", "SYS-X"])
def test_exact_one_form_integrates_to_zero(systems, name, rng):
    sys = systems[name]
    f = TensorTriple.build(2, beta=DPSI)
    for x, v in random_rays(sys, 8, rng):
        assert abs(mp_ray(sys, f, x, v)) <= 1e-10


def test_magnetic_ray_examples(systems, rng):
    for name in ("SYS-E", "SYS-U"):
        msys = reduce(systems[name])
        G = msys.system.metric
        for x, v in random_rays(systems[name], 4, rng):
            w = v / systems[name].P(x)
            assert abs(magnetic_ray(msys, MagneticPair.build(2), x, w)) == 0
            assert abs(magnetic_ray(msys, MagneticPair.build(2, beta=DPSI), x, w)) <= 1e-10
            tau_G = RayTransform(msys.system, [])(x, w)[1]
            assert magnetic_ray(msys, MagneticPair(G, MagneticPair.build(2).beta), x, w) == pytest.approx(tau_G)


def test_phi_examples(systems):
    e = systems["SYS-E"]
    x = [0.2, 0.5]
    assert same_pair(phi_map(e, TensorTriple.build(2, h=[[1, 0], [0, 1]], V=1)),
                     MagneticPair.build(2, h=[[2, 0], [0, 2]]), x)
    assert same_pair(phi_map(e, TensorTriple.build(2, beta=["x2", "x1^2"])), MagneticPair.build(2, beta=["x2", "x1^2"]), x)
    for name in ("SYS-E", "SYS-U", "SYS-X"):
        sys = systems[name]
        assert same_pair(phi_map(sys, kernel_generator(sys, PSI)), MagneticPair.build(2), x)


def test_phi_preimage_round_trip(systems, rng):
    sys = systems["SYS-U"]
    for _ in range(3):
        f = random_triple(2, rng)
        p = MagneticPair(f.h, f.beta)
        assert same_pair(phi_map(sys, phi_preimage(sys, p)), p, [0.3, -0.1])
    zero = phi_preimage(sys, MagneticPair.build(2))
    assert same_triple(zero, TensorTriple.zero(2), [0.3, 0.1])
    b = systems["SYS-B"]
    G = reduce(b).system.metric
    assert same_triple(phi_preimage(b, MagneticPair(G, MagneticPair.build(2).beta)),
                       TensorTriple(b.metric, TensorTriple.zero(2).beta, TensorTriple.zero(2).V), [0.3, 0.1])


def test_kernel_generator_examples(systems):
    e = systems["SYS-E"]
    f = kernel_generator(e, 1.0)
    assert same_triple(f, TensorTriple.build(2, h=[[-1, 0], [0, -1]], V=1), [0.1, 0.1])
    rng = np.random.default_rng(3)
    for x, v in random_rays(e, 20, rng):
        assert abs(mp_ray(e, f, x, v)) <= 1e-9
    u = systems["SYS-U"]
    vals, _ = RayTransform(u, [kernel_generator(u, "x1")]).on_fan(boundary_fan(u, 8, 8))
    assert np.max(np.abs(vals)) <= 1e-8


@pytest.mark.parametrize("name,tol", [("SYS-E", 1e-9), ("SYS-U", 1e-6), ("SYS-BU", 1e-6), ("SYS-X", 1e-6)])
def test_reduction_identity(systems, name, tol, rng):
    sys = systems[name]
    msys = reduce(sys)
    fs = [TensorTriple.build(2, h=[[1, 0], [0, 1]])] + [random_triple(2, rng) for _ in range(2)]
    for f in fs:
        for x, v in random_rays(sys, 7, rng):
            assert reduction_identity_residual(sys, f, x, v, msys) <= tol


def test_transform_is_linear(systems, rng):
    sys = systems["SYS-X"]
    f, g = random_triple(2, rng), random_triple(2, rng)
    T = RayTransform(sys, [f, g, f.scaled(2.0) + g, f - g])
    for x, v in random_rays(sys, 5, rng):
        a, b, c, d = T(x, v)[0]
        assert c == pytest.approx(2 * a + b, abs=1e-11)
        assert d == pytest.approx(a - b, abs=1e-11)


def test_sqrtP_weight(systems):
    u = systems["SYS-U"]
    x, v = ray_state(u, 0.5, 0.2)
    one = TensorTriple.build(2, V=1)
    w_val = RayTransform(u, [one], weight="sqrtP")(x, v)[0][0]
    tr = RayTransform(u, [one])
    tau = tr(x, v)[1]
    traj = tr.flow.run(x, v)
    ts = np.linspace(0, tau, 4001)
    sP = np.sqrt([u.P(s[:2]) for s in traj.at(ts)])
    assert w_val == pytest.approx(scipy.integrate.simpson(sP, x=ts), rel=1e-6)


def test_l2_norms(systems):
    e = systems["SYS-E"]
    assert l2_norm_triple(e, TensorTriple.zero(2)) == 0
    one = TensorTriple.build(2, V=1)
    assert l2_norm_triple(e, one) == pytest.approx(np.sqrt(np.pi), rel=1e-10)
    assert l2_norm_triple(e, one.scaled(2.0)) == pytest.approx(2 * np.sqrt(np.pi), rel=1e-10)
    fan = boundary_fan(e, 8, 8)
    vals = np.ones(len(fan))
    assert l2_norm_boundary(fan, 2 * vals) == pytest.approx(2 * l2_norm_boundary(fan, vals))


def test_boundedness(systems, rng):
    e = systems["SYS-E"]
    fan, quad = boundary_fan(e, 8, 8), phase_quadrature(e, 16, 32, 16)
    rep = boundedness_check(e, TensorTriple.zero(2), fan, quad)
    assert rep.lhs == 0 and rep.rhs == 0 and rep.holds
    rep = boundedness_check(e, TensorTriple.build(2, V=1), fan, quad)
    assert rep.C == pytest.approx(2 * np.cos(np.pi / 16)) and rep.holds
    for name in ("SYS-B", "SYS-U", "SYS-C"):
        sys = systems[name]
        rep = boundedness_check(sys, random_triple(2, rng), boundary_fan(sys, 8, 8), phase_quadrature(sys, 16, 32, 16))
        assert rep.lhs < rep.rhs


def test_empty_fan_is_an_error(systems):
    with pytest.raises(ValueError):
        fan_from_angles(systems["SYS-E"], [])


def test_sinogram_csv(systems):
    e = systems["SYS-E"]
    fan = fan_from_angles(e, [(0.0, 0.0), (1.0, 0.5)])
    vals, tau = RayTransform(e, [TensorTriple.build(2, V=1)]).on_fan(fan)
    text = sinogram_csv(fan, vals, tau)
    lines = text.splitlines()
    assert lines[0] == "boundary_angle,direction_angle,value,tau"
    assert lines[1] == "0.000000000000,0.000000000000,2.000000000000000e+00,2.000000000000000e+00"
    two = sinogram_csv(fan, np.hstack([vals, vals]))
    assert two.splitlines()[0] == "boundary_angle,direction_angle,value1,value2"


def test_three_dimensional_transform():
    e3 = catalog.sys_e(3)
    fan = boundary_fan(e3, 8, 8)
    vals, tau = RayTransform(e3, [TensorTriple.build(3, V=1), kernel_generator(e3, "x3")]).on_fan(fan)
    np.testing.assert_allclose(vals[:, 0], tau, atol=1e-12)
    assert np.max(np.abs(vals[:, 1])) <= 1e-10
