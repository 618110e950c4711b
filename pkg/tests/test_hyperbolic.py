import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from surfdist import hyperbolic as hyp
from surfdist.hyperbolic import MobiusTransform


def disk_point(max_r=0.95):
    return st.tuples(st.floats(0, max_r), st.floats(0, 2 * np.pi)).map(lambda t: t[0] * np.exp(1j * t[1]))


mobius = st.builds(lambda th, a: MobiusTransform(th, a), st.floats(0, 2 * np.pi), disk_point(0.9))


def cosh_distance(z, w):
    # [DERIVED] independent closed form of the same metric
    return np.arccosh(1 + 2 * abs(z - w) ** 2 / ((1 - abs(z) ** 2) * (1 - abs(w) ** 2)))


def test_distance_reference_value():
    assert hyp.hyperbolic_distance(0, 0.5) == pytest.approx(np.log(3.0), abs=1e-12)


@given(disk_point(), disk_point())
def test_distance_matches_cosh_formula(z, w):
    assert hyp.hyperbolic_distance(z, w) == pytest.approx(cosh_distance(z, w), abs=1e-7)


@given(disk_point(), disk_point(), disk_point())
def test_distance_metric_axioms(a, b, c):
    d = hyp.hyperbolic_distance
    assert d(a, b) == pytest.approx(d(b, a), abs=1e-12)
    assert d(a, a) == 0
    assert d(a, c) <= d(a, b) + d(b, c) + 1e-9


@given(mobius, disk_point(), disk_point())
def test_distance_mobius_invariant(m, z, w):
    assert hyp.hyperbolic_distance(m(z), m(w)) == pytest.approx(hyp.hyperbolic_distance(z, w), abs=1e-8)


@given(mobius, disk_point(0.999))
def test_transform_preserves_disk(m, z):
    assert abs(m(z)) < 1
    assert abs(m(np.exp(1j * np.angle(z + 1e-300)))) == pytest.approx(1.0, abs=1e-12)


@given(mobius, mobius, disk_point())
def test_compose_is_function_composition(m1, m2, z):
    np.testing.assert_allclose(hyp.compose(m2, m1)(z), m2(m1(z)), atol=1e-11)


@given(mobius, disk_point())
def test_inverse(m, z):
    np.testing.assert_allclose(hyp.inverse(m)(m(z)), z, atol=1e-11)
    np.testing.assert_allclose(hyp.compose(m, hyp.inverse(m))(z), z, atol=1e-11)


@given(mobius, mobius, mobius, disk_point())
def test_composition_associative(a, b, c, z):
    left = hyp.compose(a, hyp.compose(b, c))
    right = hyp.compose(hyp.compose(a, b), c)
    np.testing.assert_allclose(left(z), right(z), atol=1e-10)


@given(mobius)
def test_matrix_roundtrip(m):
    back = MobiusTransform.from_matrix(m.matrix)
    assert back.alpha == pytest.approx(m.alpha, abs=1e-12)
    assert np.exp(1j * back.theta) == pytest.approx(np.exp(1j * m.theta), abs=1e-12)


@given(mobius, disk_point(0.9))
def test_derivative_matches_finite_difference(m, z):
    h = 1e-6
    fd = (m(z + h) - m(z - h)) / (2 * h)
    assert m.derivative(z) == pytest.approx(fd, rel=1e-6, abs=1e-6)


@given(disk_point(), disk_point())
def test_translation_hits_target(a, b):
    assert hyp.translation(a, b)(a) == pytest.approx(b, abs=1e-11)


@given(disk_point(0.8), disk_point(0.8), st.floats(0, 2 * np.pi))
def test_family_fixing(z, zp, theta):
    m = hyp.mobius_family_fixing(z, zp, theta)
    assert m(z) == pytest.approx(zp, abs=1e-11)


def test_family_fixing_rotates_tangents():
    m = hyp.mobius_family_fixing(0.3j, -0.2, 1.1)
    # the derivative at the fixed point has argument theta plus the transport angle
    d0 = hyp.mobius_family_fixing(0.3j, -0.2, 0.0).derivative(0.3j)
    assert np.angle(m.derivative(0.3j) / d0) == pytest.approx(1.1, abs=1e-12)


def test_invalid_alpha():
    with pytest.raises(ValueError):
        MobiusTransform(0.0, 1.0)


def test_distance_outside_disk_rejected():
    with pytest.raises(ValueError):
        hyp.hyperbolic_distance(0, 1.0)


@pytest.mark.parametrize("R", [0.1, 0.5, 1.5])
def test_neighbourhood_area_quadrature(R):
    # [DERIVED] polar integral of (1 - r^2)^-2 over the euclidean disk
    rho = hyp.euclidean_radius(R)
    val, _ = integrate.quad(lambda r: 2 * np.pi * r / (1 - r * r) ** 2, 0, rho)
    assert hyp.neighborhood_area(R) == pytest.approx(val, rel=1e-12)
    g = hyp.neighborhood_grid(R, 16, 64)
    assert g.weights.sum() * 64 == pytest.approx(val, rel=1e-12)


def test_neighbourhood_grid_rotation_is_cyclic_shift():
    g = hyp.neighborhood_grid(0.5, 4, 16)
    rot = g.points * np.exp(2j * np.pi * 3 / 16)
    np.testing.assert_allclose(rot, np.roll(g.points, -3, axis=1), atol=1e-15)


@given(disk_point(0.9))
def test_neighbourhood_samples_inside_ball(z):
    R = 0.7
    pts, w = hyp.neighborhood_samples(z, R, 6, 12)
    assert np.all(hyp.hyperbolic_distance(z, pts) <= R + 1e-9)
    assert w.sum() == pytest.approx(hyp.neighborhood_area(R), rel=1e-12)


def test_grid_integrates_radial_function():
    # [DERIVED] integral of d(0, .) over N(0, R) against a 1-D quadrature
    R = 1.0
    g = hyp.neighborhood_grid(R, 64, 8)
    approx = np.sum(g.weights[:, None] * hyp.hyperbolic_distance(0, g.points))
    rho = hyp.euclidean_radius(R)
    exact, _ = integrate.quad(lambda r: 2 * np.pi * r * 2 * np.arctanh(r) / (1 - r * r) ** 2, 0, rho)
    assert approx == pytest.approx(exact, rel=1e-3)


def test_vertex_measure_boundary_zero():
    w = hyp.hyperbolic_vertex_measure(np.ones(3), np.array([0, 0.5, 1.0]), np.array([False, False, True]))
    np.testing.assert_allclose(w, [1.0, 1 / 0.75**2, 0.0])
