"""Tests of the orthonormal-factor quotient geometry.

Frozen numbers in the closed-form tests were worked out by hand from the
defining equations (rank-1 lift at a coordinate point, rank-2 projection at
orthonormal factors); curves are checked against the great-circle oracle and
finite differences.
"""

import numpy as np
import pytest

from fixedrank.exceptions import (
    ContractError,
    GaugeError,
    RankError,
    TangencyError,
)
from fixedrank.factors import TangentPair, constant_field, zero_pair
from fixedrank.factors import VectorField
from fixedrank.kernels import qr_positive, sym
from fixedrank.objectives import gradient_field_stiefel
from fixedrank.stiefel import StiefelGeometry, StiefelPoint

from _oracles import (
    QuadraticDistanceOracle,
    fd_derivative,
    pair_distance,
    pair_scale,
)


def small_geometry():
    return StiefelGeometry(7, 5, 2)


def tiny_setup():
    """Hand-worked rank-1 example: u = e1, v = [1, 2]^T, z = [[3,0],[1,2]]."""
    geo = StiefelGeometry(2, 2, 1)
    pt = geo.point(np.array([[1.0], [0.0]]), np.array([[1.0], [2.0]]))
    z = np.array([[3.0, 0.0], [1.0, 2.0]])
    return geo, pt, z


def projector_field(cm, cn) -> VectorField:
    """Field Y(pt) = tangent projection of the constant raw pair (cm, cn),
    with its exact coordinatewise derivative; gives the connection a
    genuinely point-dependent field to differentiate."""

    def value(pt):
        return TangentPair(pt, cm - pt.u @ sym(pt.u.T @ cm), cn)

    def derivative(pt, direction):
        du = direction.du
        return TangentPair(
            pt,
            -du @ sym(pt.u.T @ cm) - pt.u @ sym(du.T @ cm),
            np.zeros_like(cn),
        )

    return VectorField(value=value, derivative=derivative)


# -- points ---------------------------------------------------------------------


def test_point_basic_properties():
    geo = small_geometry()
    pt = geo.random_point(np.random.default_rng(0))
    assert pt.shape == (7, 5)
    assert pt.rank == 2
    assert np.linalg.norm(pt.u.T @ pt.u - np.eye(2)) <= 1e-12
    assert np.allclose(pt.gram_v_plus, pt.v.T @ pt.v + np.eye(2))
    assert not pt.u.flags.writeable
    w = np.random.default_rng(1).standard_normal((2, 3))
    assert np.allclose(pt.solve_gram_v(w), np.linalg.solve(pt.gram_v, w))


def test_point_rejects_non_orthonormal_left_factor():
    with pytest.raises(ValueError):
        StiefelPoint(np.array([[2.0], [0.0]]), np.array([[1.0], [1.0]]))


def test_point_rejects_rank_deficient_right_factor():
    u = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
    with pytest.raises(RankError):
        StiefelPoint(u, np.array([[1.0, 1.0], [2.0, 2.0]]))


def test_point_rejects_shape_mismatch():
    with pytest.raises(ValueError):
        StiefelPoint(np.eye(3), np.ones((4, 2)))


def test_geometry_dimension():
    assert small_geometry().dim == 2 * (7 + 5 - 2)
    with pytest.raises(ValueError):
        StiefelGeometry(3, 2, 3)


# -- tangent projection -----------------------------------------------------------


def test_tangent_project_fixes_tangent_pairs():
    geo = small_geometry()
    rng = np.random.default_rng(2)
    pt = geo.random_point(rng)
    a = geo.random_tangent(pt, rng)
    assert pair_distance(geo.tangent_project(a), a) <= 1e-12


def test_tangent_project_kills_symmetric_normal_directions():
    geo = small_geometry()
    rng = np.random.default_rng(3)
    pt = geo.random_point(rng)
    s0 = rng.standard_normal((2, 2))
    s0 = s0 + s0.T
    dv = rng.standard_normal((5, 2))
    out = geo.tangent_project(TangentPair(pt, pt.u @ s0, dv))
    assert np.linalg.norm(out.du) <= 1e-12
    assert np.allclose(out.dv, dv)


def test_tangent_project_is_idempotent_and_self_adjoint():
    geo = small_geometry()
    rng = np.random.default_rng(4)
    pt = geo.random_point(rng)
    a = TangentPair(pt, rng.standard_normal((7, 2)), rng.standard_normal((5, 2)))
    b = TangentPair(pt, rng.standard_normal((7, 2)), rng.standard_normal((5, 2)))
    pa = geo.tangent_project(a)
    pb = geo.tangent_project(b)
    assert pair_distance(geo.tangent_project(pa), pa) <= 1e-12
    assert geo.metric(pa, b) == pytest.approx(geo.metric(a, pb), abs=1e-12)
    assert geo.tangent_residual(pa) <= 1e-12


# -- metric -----------------------------------------------------------------------


def test_metric_is_plain_trace_inner_product():
    geo = small_geometry()
    rng = np.random.default_rng(5)
    pt = geo.random_point(rng)
    a = geo.random_tangent(pt, rng, normalized=False)
    b = geo.random_tangent(pt, rng, normalized=False)
    expected = float(np.sum(a.du * b.du) + np.sum(a.dv * b.dv))
    assert geo.metric(a, b) == pytest.approx(expected, rel=1e-14)
    with pytest.raises(ContractError):
        geo.metric(a, geo.random_tangent(geo.random_point(rng), rng))


def test_metric_invariant_under_hundred_rotations():
    geo = small_geometry()
    rng = np.random.default_rng(6)
    pt = geo.random_point(rng)
    a = geo.random_tangent(pt, rng, normalized=False)
    b = geo.random_tangent(pt, rng, normalized=False)
    base = geo.metric(a, b)
    for _ in range(100):
        rot = geo.random_rotation(rng)
        pt2 = geo.transport_point(pt, rot)
        a2 = geo.fiber_transport(a, rot, at=pt2)
        b2 = geo.fiber_transport(b, rot, at=pt2)
        assert abs(geo.metric(a2, b2) - base) <= 1e-12 * max(1.0, abs(base))


# -- vertical space ----------------------------------------------------------------


def test_vertical_vector_kills_product_velocity():
    geo = small_geometry()
    rng = np.random.default_rng(7)
    pt = geo.random_point(rng)
    omega = rng.standard_normal((2, 2))
    omega = omega - omega.T
    vert = geo.vertical_vector(pt, omega)
    assert np.linalg.norm(geo.product_velocity(vert)) <= 1e-13 * pair_scale(vert)
    assert geo.horizontal_gap(vert) > 0.99


def test_vertical_vector_requires_skew_generator():
    geo = small_geometry()
    pt = geo.random_point(np.random.default_rng(8))
    with pytest.raises(ContractError):
        geo.vertical_vector(pt, np.eye(2))
    zero = geo.vertical_vector(pt, np.zeros((2, 2)))
    assert pair_scale(zero) == pytest.approx(0.0, abs=1e-300)


def test_vertical_orthogonal_to_horizontal():
    geo = small_geometry()
    rng = np.random.default_rng(9)
    pt = geo.random_point(rng)
    omega = rng.standard_normal((2, 2))
    omega = omega - omega.T
    vert = geo.vertical_vector(pt, omega)
    for _ in range(5):
        h = geo.random_horizontal(pt, rng)
        assert abs(geo.metric(vert, h)) <= 1e-10 * pair_scale(vert)


# -- horizontal lift ---------------------------------------------------------------


def test_lift_tiny_example_frozen_values():
    geo, pt, z = tiny_setup()
    lift = geo.horizontal_lift(pt, z)
    assert np.allclose(lift.omega, [[0.0]], atol=1e-14)
    assert np.allclose(lift.s_matrix, [[3.0]], atol=1e-13)
    assert np.allclose(lift.pair.du, [[0.0], [1.0]], atol=1e-13)
    assert np.allclose(lift.pair.dv, [[3.0], [0.0]], atol=1e-13)


def test_lift_reproduces_tangent_matrix():
    geo = small_geometry()
    rng = np.random.default_rng(10)
    for _ in range(8):
        pt = geo.random_point(rng)
        z = geo.random_tangent_matrix(pt, rng)
        lift = geo.horizontal_lift(pt, z)
        assert np.linalg.norm(geo.product_velocity(lift.pair) - z) <= 1e-10
        assert lift.pair.horizontal
        assert np.linalg.norm(lift.omega + lift.omega.T) <= 1e-12
        assert np.linalg.norm(lift.s_matrix - lift.s_matrix.T) <= 1e-9


def test_lift_is_horizontal_and_stiefel_tangent():
    geo = small_geometry()
    rng = np.random.default_rng(11)
    pt = geo.random_point(rng)
    z = geo.random_tangent_matrix(pt, rng)
    pair = geo.horizontal_lift(pt, z).pair
    assert geo.horizontality_residual(pair) <= 1e-10
    assert geo.tangent_residual(pair) <= 1e-12
    assert geo.horizontal_gap(pair) <= 1e-10


def test_lift_zero_matrix():
    geo = small_geometry()
    pt = geo.random_point(np.random.default_rng(12))
    lift = geo.horizontal_lift(pt, np.zeros((7, 5)))
    assert lift.pair.euclidean_norm() == 0.0
    assert np.allclose(lift.omega, 0.0)
    assert np.allclose(lift.s_matrix, 0.0)


def test_lift_symmetric_coupling_gives_zero_rotation():
    # if u^T z v is symmetric the rotation-rate equation is homogeneous
    geo = small_geometry()
    rng = np.random.default_rng(13)
    pt = geo.random_point(rng)
    b = rng.standard_normal((2, 2))
    b = b + b.T
    z = pt.u @ np.linalg.solve(pt.gram_v, b.T).T @ pt.v.T
    lift = geo.horizontal_lift(pt, z)
    assert np.linalg.norm(lift.omega) <= 1e-12
    assert np.allclose(lift.s_matrix, pt.u.T @ z @ pt.v, atol=1e-11)


def test_lift_roundtrip_on_horizontal_vectors():
    geo = small_geometry()
    rng = np.random.default_rng(14)
    pt = geo.random_point(rng)
    h = geo.random_horizontal(pt, rng)
    again = geo.horizontal_lift(pt, geo.product_velocity(h)).pair
    assert pair_distance(h, again) <= 1e-9 * pair_scale(h)


def test_factored_lift_matches_dense_lift():
    geo = small_geometry()
    rng = np.random.default_rng(15)
    pt = geo.random_point(rng)
    fu = rng.standard_normal((7, 2))
    fv = rng.standard_normal((5, 2))
    z = fu @ pt.v.T + pt.u @ fv.T
    dense = geo.horizontal_lift(pt, z)
    fact = geo.horizontal_lift_factored(pt, fu, fv)
    assert pair_distance(dense.pair, fact.pair) <= 1e-11 * pair_scale(dense.pair)
    assert np.allclose(dense.omega, fact.omega, atol=1e-12)


def test_lift_rejects_non_tangent_matrix():
    geo = small_geometry()
    rng = np.random.default_rng(16)
    pt = geo.random_point(rng)
    with pytest.raises(TangencyError):
        geo.horizontal_lift(pt, rng.standard_normal((7, 5)))
    with pytest.raises(ValueError):
        geo.horizontal_lift(pt, np.zeros((4, 4)))


# -- gauge action -------------------------------------------------------------------


def test_lift_commutes_with_rotation():
    geo = small_geometry()
    rng = np.random.default_rng(17)
    pt = geo.random_point(rng)
    z = geo.random_tangent_matrix(pt, rng)
    lift = geo.horizontal_lift(pt, z).pair
    rot = geo.random_rotation(rng)
    pt2 = geo.transport_point(pt, rot)
    fresh = geo.horizontal_lift(pt2, z).pair
    moved = geo.fiber_transport(lift, rot, at=pt2)
    assert pair_distance(fresh, moved) <= 1e-9 * pair_scale(fresh)
    assert np.linalg.norm(geo.product_velocity(moved) - z) <= 1e-10
    assert moved.horizontal


def test_transport_rejects_non_orthogonal_gauge():
    geo = small_geometry()
    pt = geo.random_point(np.random.default_rng(18))
    with pytest.raises(GaugeError):
        geo.transport_point(pt, np.diag([2.0, 1.0]))
    with pytest.raises(GaugeError):
        geo.transport_point(pt, np.eye(3))


# -- horizontal projection -------------------------------------------------------------


def test_projection_frozen_rank2_example():
    geo = StiefelGeometry(3, 2, 2)
    pt = geo.point(np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]), np.eye(2))
    a = TangentPair(
        pt,
        np.array([[0.0, 1.0], [-1.0, 0.0], [2.0, 3.0]]),
        np.array([[1.0, 2.0], [3.0, 4.0]]),
    )
    proj = geo.horizontal_project(a)
    assert np.allclose(proj.omega, [[0.0, -0.25], [0.25, 0.0]], atol=1e-13)
    assert np.allclose(
        proj.pair.du, [[0.0, 0.75], [-0.75, 0.0], [2.0, 3.0]], atol=1e-13
    )
    assert np.allclose(proj.pair.dv, [[1.0, 1.75], [3.25, 4.0]], atol=1e-13)


def test_projection_fixes_horizontal_and_kills_vertical():
    geo = small_geometry()
    rng = np.random.default_rng(19)
    pt = geo.random_point(rng)
    h = geo.random_horizontal(pt, rng)
    proj = geo.horizontal_project(h)
    assert np.linalg.norm(proj.omega) <= 1e-12
    assert pair_distance(proj.pair, h) <= 1e-11

    omega = rng.standard_normal((2, 2))
    omega = omega - omega.T
    vert = geo.vertical_vector(pt, omega)
    out = geo.horizontal_project(vert).pair
    assert pair_scale(out) <= 1e-12 * pair_scale(vert)


def test_projection_idempotent_orthogonal_split():
    geo = small_geometry()
    rng = np.random.default_rng(20)
    pt = geo.random_point(rng)
    a = geo.random_tangent(pt, rng)
    proj = geo.horizontal_project(a)
    again = geo.horizontal_project(proj.pair).pair
    assert pair_distance(proj.pair, again) <= 1e-10
    assert abs(geo.metric(proj.pair, a - proj.pair)) <= 1e-10
    # removed part is the vertical vector generated by -omega
    removed = a - proj.pair
    expected = geo.vertical_vector(pt, -proj.omega)
    assert pair_distance(removed, expected) <= 1e-13


def test_projection_rejects_non_tangent_input():
    geo = small_geometry()
    rng = np.random.default_rng(21)
    pt = geo.random_point(rng)
    raw = TangentPair(pt, rng.standard_normal((7, 2)), rng.standard_normal((5, 2)))
    with pytest.raises(ContractError):
        geo.horizontal_project(raw)


def test_projection_equals_lift_of_velocity():
    geo = small_geometry()
    rng = np.random.default_rng(22)
    pt = geo.random_point(rng)
    a = geo.random_tangent(pt, rng)
    proj = geo.horizontal_project(a).pair
    via_lift = geo.horizontal_lift(pt, geo.product_velocity(a)).pair
    assert pair_distance(proj, via_lift) <= 1e-9 * pair_scale(proj)


# -- connection ---------------------------------------------------------------------


def test_connection_zero_direction_gives_zero():
    geo = small_geometry()
    rng = np.random.default_rng(23)
    pt = geo.random_point(rng)
    y = geo.random_tangent(pt, rng)
    out = geo.connection(zero_pair(pt), constant_field(y))
    assert out.euclidean_norm() == 0.0


def test_connection_output_in_tangent_space():
    geo = small_geometry()
    rng = np.random.default_rng(24)
    pt = geo.random_point(rng)
    oracle = QuadraticDistanceOracle(rng.standard_normal((7, 5)))
    field = gradient_field_stiefel(oracle)
    x = geo.random_tangent(pt, rng)
    out = geo.connection(x, field)
    assert np.linalg.norm(sym(pt.u.T @ out.du)) <= 1e-10


def test_connection_metric_compatibility_along_geodesic():
    # differentiate g(Y, Z) along a total-space geodesic and compare with
    # the covariant derivatives of two projector-generated fields
    geo = small_geometry()
    rng = np.random.default_rng(25)
    pt = geo.random_point(rng)
    x = geo.random_tangent(pt, rng)
    fy = projector_field(rng.standard_normal((7, 2)), rng.standard_normal((5, 2)))
    fz = projector_field(rng.standard_normal((7, 2)), rng.standard_normal((5, 2)))

    def g_yz(t):
        u_t, v_t = geo.exponential_total(x, t)
        pt_t = StiefelPoint(u_t, v_t)
        return geo.metric(fy.value(pt_t), fz.value(pt_t))

    lhs = fd_derivative(g_yz)
    rhs = geo.metric(geo.connection(x, fy), fz.value(pt)) + geo.metric(
        fy.value(pt), geo.connection(x, fz)
    )
    assert abs(lhs - rhs) <= 1e-5


def test_connection_metric_compatibility_constant_fields():
    # constant fields make both sides vanish; the identity still holds
    geo = small_geometry()
    rng = np.random.default_rng(26)
    pt = geo.random_point(rng)
    x = geo.random_tangent(pt, rng)
    y = geo.random_tangent(pt, rng)
    z = geo.random_tangent(pt, rng)

    def g_yz(t):
        return float(np.sum(y.du * z.du) + np.sum(y.dv * z.dv))

    lhs = fd_derivative(g_yz)
    rhs = geo.metric(geo.connection(x, constant_field(y)), z) + geo.metric(
        y, geo.connection(x, constant_field(z))
    )
    assert abs(lhs - rhs) <= 1e-5


def test_quotient_connection_horizontal_and_covariant():
    geo = small_geometry()
    rng = np.random.default_rng(27)
    pt = geo.random_point(rng)
    oracle = QuadraticDistanceOracle(rng.standard_normal((7, 5)))
    field = gradient_field_stiefel(oracle)
    x = geo.random_horizontal(pt, rng)
    out = geo.quotient_connection(x, field)
    assert geo.horizontality_residual(out) <= 1e-9
    for _ in range(3):
        rot = geo.random_rotation(rng)
        pt2 = geo.transport_point(pt, rot)
        x2 = geo.fiber_transport(x, rot, at=pt2)
        out2 = geo.quotient_connection(x2, field)
        moved = geo.fiber_transport(out, rot, at=pt2)
        assert pair_distance(out2, moved) <= 1e-8 * pair_scale(moved)


def test_quotient_connection_rejects_vertical_direction():
    geo = small_geometry()
    rng = np.random.default_rng(28)
    pt = geo.random_point(rng)
    oracle = QuadraticDistanceOracle(rng.standard_normal((7, 5)))
    omega = rng.standard_normal((2, 2))
    omega = omega - omega.T
    with pytest.raises(ContractError):
        geo.quotient_connection(
            geo.vertical_vector(pt, omega), gradient_field_stiefel(oracle)
        )


# -- gradient ----------------------------------------------------------------------


def test_gradient_vanishes_at_exact_fit():
    geo = small_geometry()
    rng = np.random.default_rng(29)
    pt = geo.random_point(rng)
    oracle = QuadraticDistanceOracle(pt.product())
    assert pair_scale(geo.lifted_gradient(pt, oracle)) <= 1e-12


def test_gradient_defining_property_finite_difference():
    geo = small_geometry()
    rng = np.random.default_rng(30)
    pt = geo.random_point(rng)
    oracle = QuadraticDistanceOracle(rng.standard_normal((7, 5)))
    grad = geo.lifted_gradient(pt, oracle)
    for _ in range(20):
        a = geo.random_tangent(pt, rng)
        fd = fd_derivative(
            lambda t: oracle.value(pt.u + t * a.du, pt.v + t * a.dv)
        )
        assert geo.metric(grad, a) == pytest.approx(fd, abs=1e-5)


def test_gradient_is_horizontal_exactly():
    geo = small_geometry()
    rng = np.random.default_rng(31)
    pt = geo.random_point(rng)
    oracle = QuadraticDistanceOracle(rng.standard_normal((7, 5)))
    grad = geo.lifted_gradient(pt, oracle)
    assert geo.horizontality_residual(grad) <= 1e-10 * pair_scale(grad)
    assert geo.tangent_residual(grad) <= 1e-12 * pair_scale(grad)
    assert grad.horizontal


def test_gradient_field_matches_and_differentiates():
    geo = small_geometry()
    rng = np.random.default_rng(32)
    pt = geo.random_point(rng)
    oracle = QuadraticDistanceOracle(rng.standard_normal((7, 5)))
    field = gradient_field_stiefel(oracle)
    assert pair_distance(field.value(pt), geo.lifted_gradient(pt, oracle)) == 0.0
    x = geo.random_tangent(pt, rng)
    step = 1e-6
    plus = StiefelPoint(pt.u + step * x.du, pt.v + step * x.dv)
    minus = StiefelPoint(pt.u - step * x.du, pt.v - step * x.dv)
    fd_du = (field.value(plus).du - field.value(minus).du) / (2 * step)
    fd_dv = (field.value(plus).dv - field.value(minus).dv) / (2 * step)
    out = field.derivative(pt, x)
    assert np.linalg.norm(out.du - fd_du) <= 1e-5
    assert np.linalg.norm(out.dv - fd_dv) <= 1e-5


# -- geodesics ---------------------------------------------------------------------


def test_exponential_zero_velocity_is_identity():
    geo = small_geometry()
    rng = np.random.default_rng(33)
    pt = geo.random_point(rng)
    moved = geo.exponential(zero_pair(pt), 1.0)
    assert np.linalg.norm(moved.u - pt.u) <= 1e-13
    assert np.linalg.norm(moved.v - pt.v) <= 1e-13


def test_exponential_unit_circle_instance():
    geo = StiefelGeometry(2, 1, 1)
    pt = geo.point(np.array([[1.0], [0.0]]), np.array([[1.0]]))
    theta = 0.7
    h = TangentPair(pt, np.array([[0.0], [theta]]), np.zeros((1, 1)))
    u_new, v_new = geo.exponential_total(h, 1.0)
    assert np.allclose(u_new, [[np.cos(theta)], [np.sin(theta)]], atol=1e-12)
    assert np.allclose(v_new, [[1.0]])


def test_exponential_great_circle_general_p1():
    geo = StiefelGeometry(6, 4, 1)
    rng = np.random.default_rng(34)
    pt = geo.random_point(rng)
    h = geo.random_horizontal(pt, rng)
    speed = np.linalg.norm(h.du)
    for t in (0.3, 0.9, 1.7):
        u_t, v_t = geo.exponential_total(h, t)
        expected_u = pt.u * np.cos(speed * t) + (h.du / speed) * np.sin(speed * t)
        assert np.linalg.norm(u_t - expected_u) <= 1e-10
        assert np.allclose(v_t, pt.v + t * h.dv, atol=1e-12)


def test_exponential_velocity_matches_finite_difference():
    geo = small_geometry()
    rng = np.random.default_rng(35)
    pt = geo.random_point(rng)
    h = geo.random_tangent(pt, rng)
    step = 1e-6
    up, vp = geo.exponential_total(h, step)
    um, vm = geo.exponential_total(h, -step)
    assert np.linalg.norm((up - um) / (2 * step) - h.du) <= 1e-6
    assert np.linalg.norm((vp - vm) / (2 * step) - h.dv) <= 1e-6


def test_exponential_constant_speed():
    geo = small_geometry()
    rng = np.random.default_rng(36)
    pt = geo.random_point(rng)
    h = geo.random_tangent(pt, rng)
    step = 1e-4
    base = np.sum(h.du**2) + np.sum(h.dv**2)
    for t in (0.1, 0.4, 0.7, 1.0):
        up, vp = geo.exponential_total(h, t + step)
        um, vm = geo.exponential_total(h, t - step)
        du = (up - um) / (2 * step)
        dv = (vp - vm) / (2 * step)
        speed = np.sum(du**2) + np.sum(dv**2)
        assert abs(speed - base) <= 1e-6


def test_exponential_orthonormality_along_curve():
    geo = small_geometry()
    rng = np.random.default_rng(37)
    pt = geo.random_point(rng)
    h = geo.random_tangent(pt, rng) * 2.0
    for t in np.linspace(0.0, 1.0, 11):
        u_t, _ = geo.exponential_total(h, t)
        assert np.linalg.norm(u_t.T @ u_t - np.eye(2)) <= 1e-9


def test_exponential_projected_second_difference_vanishes():
    # defining property of a geodesic: the tangent projection of the
    # acceleration is zero, checked by central second differences
    geo = small_geometry()
    rng = np.random.default_rng(38)
    pt = geo.random_point(rng)
    h = geo.random_tangent(pt, rng)
    step = 1e-4
    for t in (0.2, 0.5, 0.9):
        u0, v0 = geo.exponential_total(h, t)
        up, vp = geo.exponential_total(h, t + step)
        um, vm = geo.exponential_total(h, t - step)
        acc_u = (up - 2 * u0 + um) / step**2
        acc_v = (vp - 2 * v0 + vm) / step**2
        pt_t = StiefelPoint(u0, v0)
        projected = geo.tangent_project(TangentPair(pt_t, acc_u, acc_v))
        norm = np.sqrt(np.sum(projected.du**2) + np.sum(projected.dv**2))
        assert norm <= 1e-4 * geo.norm(h) ** 2


def test_exponential_requires_tangent_velocity():
    geo = small_geometry()
    rng = np.random.default_rng(39)
    pt = geo.random_point(rng)
    raw = TangentPair(pt, rng.standard_normal((7, 2)), rng.standard_normal((5, 2)))
    with pytest.raises(ContractError):
        geo.exponential_total(raw, 1.0)


def test_quotient_exponential_velocity_stays_horizontal():
    geo = small_geometry()
    rng = np.random.default_rng(40)
    pt = geo.random_point(rng)
    h = geo.random_horizontal(pt, rng)
    step = 1e-4
    for t in (0.25, 0.6, 1.0):
        u0, v0 = geo.exponential_total(h, t)
        up, vp = geo.exponential_total(h, t + step)
        um, vm = geo.exponential_total(h, t - step)
        pt_t = StiefelPoint(u0, v0)
        vel = TangentPair(pt_t, (up - um) / (2 * step), (vp - vm) / (2 * step))
        assert geo.horizontality_residual(vel) <= 1e-6


def test_quotient_exponential_gauge_independent_product():
    geo = small_geometry()
    rng = np.random.default_rng(41)
    pt = geo.random_point(rng)
    h = geo.random_horizontal(pt, rng)
    end = geo.exponential(h, 1.0)
    for _ in range(3):
        rot = geo.random_rotation(rng)
        pt2 = geo.transport_point(pt, rot)
        h2 = geo.fiber_transport(h, rot, at=pt2)
        end2 = geo.exponential(h2, 1.0)
        assert np.linalg.norm(end2.product() - end.product()) <= 1e-9


def test_quotient_exponential_rejects_non_horizontal():
    geo = small_geometry()
    rng = np.random.default_rng(42)
    pt = geo.random_point(rng)
    omega = rng.standard_normal((2, 2))
    omega = omega - omega.T
    with pytest.raises(ContractError):
        geo.exponential(geo.vertical_vector(pt, omega), 1.0)


def test_quotient_exponential_rank_loss_raises():
    geo = small_geometry()
    rng = np.random.default_rng(43)
    pt = geo.random_point(rng)
    # (0, -v) is horizontal and drives the free factor to zero at t=1
    h = TangentPair(pt, np.zeros((7, 2)), -pt.v)
    assert geo.horizontal_gap(h) <= 1e-12
    with pytest.raises(RankError):
        geo.exponential(h, 1.0)


def test_move_requires_matching_base():
    geo = small_geometry()
    rng = np.random.default_rng(44)
    p1 = geo.random_point(rng)
    p2 = geo.random_point(rng)
    with pytest.raises(ContractError):
        geo.move(p2, geo.random_horizontal(p1, rng))


def test_move_agrees_with_exponential():
    geo = small_geometry()
    rng = np.random.default_rng(45)
    pt = geo.random_point(rng)
    h = geo.random_horizontal(pt, rng)
    a = geo.move(pt, h)
    b = geo.exponential(h, 1.0)
    assert np.linalg.norm(a.u - b.u) <= 1e-14
    assert np.linalg.norm(a.v - b.v) <= 1e-14


# -- re-orthonormalization ------------------------------------------------------------


def test_reorthonormalize_repairs_drift_and_keeps_product():
    geo = small_geometry()
    rng = np.random.default_rng(46)
    pt = geo.random_point(rng)
    drifted_u = pt.u + 1e-7 * rng.standard_normal((7, 2))
    drifted = StiefelPoint(drifted_u, pt.v.copy(), orth_tol=1e-3)
    fixed = geo.reorthonormalize(drifted)
    product = drifted_u @ pt.v.T
    assert np.linalg.norm(fixed.u.T @ fixed.u - np.eye(2)) <= 1e-13
    assert np.linalg.norm(fixed.product() - product) \
        <= 1e-12 * np.linalg.norm(product)


def test_reorthonormalize_fixes_clean_points():
    geo = small_geometry()
    pt = geo.random_point(np.random.default_rng(47))
    fixed = geo.reorthonormalize(pt)
    assert np.linalg.norm(fixed.u - pt.u) <= 1e-13
    assert np.linalg.norm(fixed.v - pt.v) <= 1e-13


# -- dimensions ------------------------------------------------------------------------


def test_horizontal_space_maps_onto_manifold_tangent():
    geo = small_geometry()
    rng = np.random.default_rng(48)
    pt = geo.random_point(rng)
    images = [
        geo.product_velocity(geo.random_horizontal(pt, rng)).ravel()
        for _ in range(geo.dim + 5)
    ]
    mat = np.column_stack(images)
    svals = np.linalg.svd(mat, compute_uv=False)
    rank = int(np.sum(svals > 1e-10 * svals[0]))
    assert rank == geo.dim
