import numpy as np
import pytest

from mpray import catalog
from mpray.geometry import MPSystem
from mpray.measures import (boundary_integral, curvature_bound, fiber_measure, fiber_measure_ratio, k_mu,
                            k_mu_batch, phase_integral, santalo_residual)
from mpray.quadrature import boundary_fan, phase_quadrature
from mpray.reduction import reduce
from mpray.transform import TensorTriple
from mpray.checks import santalo_integrands

TWO_PI_SQ = 2 * np.pi**2


def test_phase_volume_flat(systems):
    e = systems["SYS-E"]
    quad = phase_quadrature(e)
    assert phase_integral(e, TensorTriple.build(2, V=1), quad) == pytest.approx(TWO_PI_SQ, rel=2e-3)
    assert abs(phase_integral(e, lambda X, V: V[:, 0], quad)) <= 1e-10


def test_phase_volume_oscillator(systems):
    u = systems["SYS-U"]
    # int_M 2 pi sqrt(1 - 0.2 r^2) dx in closed form
    exact = 4 * np.pi**2 * (1 - 0.8**1.5) / 0.6
    assert phase_integral(u, TensorTriple.build(2, V=1)) == pytest.approx(exact, rel=2e-3)


def test_boundary_integrals_flat(systems):
    e = systems["SYS-E"]
    fan = boundary_fan(e)
    assert boundary_integral(e, lambda X, V: np.ones(len(X)), fan) == pytest.approx(4 * np.pi, rel=2e-3)
    assert boundary_integral(e, "tau", fan) == pytest.approx(TWO_PI_SQ, rel=2e-3)
    grazing = np.where(np.abs(fan.direction_angle) > 1.5, 1.0, 0.0)
    assert boundary_integral(e, grazing, fan) < 0.01 * 4 * np.pi
    with pytest.raises(ValueError):
        boundary_integral(e, "length", fan)


def test_santalo_flat_constant(systems):
    e = systems["SYS-E"]
    res = santalo_residual(e, TensorTriple.build(2, V=1), boundary_fan(e, 8, 8), phase_quadrature(e))
    assert res.lhs == pytest.approx(TWO_PI_SQ, rel=5e-3)
    assert res.rhs == pytest.approx(TWO_PI_SQ, rel=5e-3)
    assert res.relative_gap <= 5e-3
    zero = santalo_residual(e, TensorTriple.zero(2), boundary_fan(e, 8, 8), phase_quadrature(e, 8, 16, 8))
    assert (zero.lhs, zero.rhs, zero.relative_gap) == (0.0, 0.0, 0.0)
    assert set(res.as_dict()) == {"lhs", "rhs", "relative_gap", "grids"}


@pytest.mark.parametrize("name", ["SYS-U", "SYS-B"])
def test_santalo_mixed_integrand_converges(systems, name):
    sys = systems[name]
    _, f = santalo_integrands(sys)[1]
    coarse = santalo_residual(sys, f, boundary_fan(sys, 8, 8), phase_quadrature(sys, 32, 64, 32))
    fine = santalo_residual(sys, f, boundary_fan(sys, 16, 16), phase_quadrature(sys, 64, 128, 64))
    assert coarse.relative_gap <= 5e-3
    assert fine.relative_gap <= max(coarse.relative_gap / 2, 1e-9)


def test_santalo_three_dimensional():
    e3 = catalog.sys_e(3)
    res = santalo_residual(e3, TensorTriple.build(3, V=1), boundary_fan(e3, 8, 8), phase_quadrature(e3, 8, 8, 8))
    # |B^3| |S^2| = (4 pi / 3)(4 pi)
    assert res.lhs == pytest.approx(16 * np.pi**2 / 3, rel=1e-10)
    assert res.relative_gap <= 5e-3


def test_fiber_measure_relation(systems):
    for name in ("SYS-U", "SYS-C", "SYS-X"):
        sys = systems[name]
        for x in ([0.1, 0.2], [-0.6, 0.3]):
            left, right = fiber_measure_ratio(sys, x)
            assert left == pytest.approx(right, rel=1e-10)
    assert fiber_measure(np.eye(2), 2.0) == pytest.approx(4 * np.pi)
    assert fiber_measure(np.diag([1.0, 2.0, 3.0]), 1.0, 64) > 0


def test_k_mu_values(systems):
    b = systems["SYS-B"]
    X = np.array([[0.0, 0.0], [0.3, -0.5]])
    V = np.array([[1.0, 0.0], [0.6, 0.8]])
    np.testing.assert_allclose(k_mu_batch(reduce(b), X, V), 6 * 0.2**2, atol=1e-14)
    assert k_mu(reduce(systems["SYS-E"]), [0.1, 0.1], [1, 0]) == 0
    sphere = MPSystem.build(2, 0.8, conformal="4/(1+x1^2+x2^2)^2")
    assert k_mu(reduce(sphere), [0.2, -0.1], [0.3, 0.4]) == pytest.approx(2.0, abs=1e-12)


def test_k_mu_three_dimensional_constant_field():
    # alpha = (B/2)(-x2, x1, 0): |Y w|^2 is maximal for w orthogonal to the field axis
    B = 0.3
    s = MPSystem.build(3, alpha=[f"-{B / 2}*x2", f"{B / 2}*x1", 0])
    v = np.array([0.0, 0.0, 1.0])
    # v along the axis: Y v = 0, so the maximum is (n+3) B^2 = 6 B^2
    assert k_mu(reduce(s), [0, 0, 0], v, n_w=32) == pytest.approx(6 * B**2, rel=1e-12)


def test_curvature_bound_examples(systems):
    assert curvature_bound(systems["SYS-E"], 8, 8).value == 0.0
    res = curvature_bound(systems["SYS-B"])
    assert res.max_k_mu == pytest.approx(0.24, rel=1e-12)
    # longest unit-speed arc of radius 5 inside the disk spans a diameter
    analytic = 0.24 * (10 * np.arcsin(0.2)) ** 2
    assert res.value <= analytic * (1 + 1e-9)
    assert res.value == pytest.approx(analytic, rel=1e-2)
    assert res.verdict
    assert curvature_bound(systems["SYS-C"], 8, 8).value == 0.0


def test_curvature_bound_monotone_in_field():
    vals = [curvature_bound(catalog.sys_b(B), 8, 8).value for B in (0.1, 0.2, 0.3)]
    assert vals[0] <= vals[1] <= vals[2] <= 4


def test_curvature_bound_self_convergence(systems):
    u = systems["SYS-U"]
    a, b = curvature_bound(u, 16, 16).value, curvature_bound(u, 32, 32).value
    assert np.isfinite(a) and abs(a - b) <= 1e-2 * b
