import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from orthocal import (
    ConfigError,
    DegenerateJoint,
    InconsistentJoints,
    InconsistentPose,
    MachineGeometry,
    ParameterDeviation,
    Unreachable,
    direct_kinematics,
    inverse_kinematics,
    leg_angles,
    within_joint_limits,
)
from orthocal.kinematics import (
    constraint_residual,
    quadratic_coefficients,
    tcp_from_leg_angles,
)

from conftest import random_dev

L = 310.25
# sqrt(310.25**2 - 60**2), 30-digit evaluation
RHO_60 = 304.392940949687596397757236499

coord = st.floats(-60, 60)
small = st.floats(-1, 1)


def test_ik_zero_posture():
    np.testing.assert_array_equal(inverse_kinematics([0, 0, 0]), [L, L, L])


def test_ik_offset_subtracts():
    dev = ParameterDeviation((1, 0, 0))
    np.testing.assert_allclose(inverse_kinematics([0, 0, 0], dev), [309.25, L, L], atol=1e-12)


def test_ik_x_displacement():
    rho = inverse_kinematics([60, 0, 0])
    np.testing.assert_allclose(rho, [370.25, RHO_60, RHO_60], rtol=0, atol=1e-9)


def test_ik_unreachable_names_leg():
    with pytest.raises(Unreachable) as info:
        inverse_kinematics([400, 0, 0])
    assert info.value.leg in ("y", "z")


def test_ik_configuration_indices():
    rho = inverse_kinematics([10, 0, 0], signs=(1, -1, 1))
    assert rho[1] == pytest.approx(-math.sqrt(L**2 - 100))
    with pytest.raises(ValueError):
        inverse_kinematics([0, 0, 0], signs=(1, 0, 1))


def test_ik_broadcasts(rng):
    pts = rng.uniform(-60, 60, (5, 3))
    batch = inverse_kinematics(pts)
    for p, rho in zip(pts, batch):
        np.testing.assert_array_equal(inverse_kinematics(p), rho)


def test_fk_zero_posture():
    np.testing.assert_allclose(direct_kinematics([L, L, L]), [0, 0, 0], atol=1e-12)


def test_fk_x_displacement():
    alpha = math.asin(60 / L)
    p = direct_kinematics([L + 60, L * math.cos(alpha), L * math.cos(alpha)])
    np.testing.assert_allclose(p, [60, 0, 0], atol=1e-9)


def test_roundtrip_1000(rng):
    pts = rng.uniform(-60, 60, (1000, 3))
    dev = random_dev(rng)
    back = direct_kinematics(inverse_kinematics(pts, dev), dev)
    assert np.max(np.abs(back - pts)) < 1e-9


def test_quadratic_coefficients_match_expanded_form(rng):
    for _ in range(20):
        dev = random_dev(rng)
        rho = inverse_kinematics(rng.uniform(-60, 60, 3), dev)
        q = rho + dev.d_rho
        li = L + dev.d_length
        q2, l2 = q**2, li**2
        pairs = q2[0] * q2[1] + q2[0] * q2[2] + q2[1] * q2[2]
        prod = q2.prod()
        cross = l2[0] * q2[1] * q2[2] + l2[1] * q2[0] * q2[2] + l2[2] * q2[0] * q2[1]
        cross4 = l2[0] ** 2 * q2[1] * q2[2] + l2[1] ** 2 * q2[0] * q2[2] + l2[2] ** 2 * q2[0] * q2[1]
        a_ref = pairs
        b_ref = prod - cross
        c_ref = prod * (q2.sum() / 4 - l2.sum() / 2) + cross4 / 4
        a, b, c = quadratic_coefficients(rho, dev)
        assert a == pytest.approx(a_ref, rel=1e-12)
        assert b == pytest.approx(b_ref, rel=1e-12)
        # the expanded C loses ~6 digits to cancellation
        assert c == pytest.approx(c_ref, rel=1e-6, abs=1e-6 * abs(prod * l2.sum()))


def test_t_is_half_squared_norm(rng):
    dev = random_dev(rng)
    p = rng.uniform(-60, 60, 3)
    a, b, c = quadratic_coefficients(inverse_kinematics(p, dev), dev)
    t = p @ p / 2
    scale = max(abs(a * t * t), abs(b * t), abs(c))
    assert abs(a * t * t + b * t + c) < 1e-9 * scale


def test_other_root_is_far_assembly_mode():
    # (-B + sqrt(D)) / 2A at rho = (L, L, L) is p = (2L/3, 2L/3, 2L/3)
    a, b, c = quadratic_coefficients([L, L, L])
    t = (-b + math.sqrt(b * b - 4 * a * c)) / (2 * a)
    p = np.full(3, L / 2 + t / L - L / 2)
    np.testing.assert_allclose(p, 2 * L / 3, rtol=1e-12)
    assert np.max(np.abs(constraint_residual(p, [L, L, L]))) < 1e-6


def test_fk_inconsistent_joints():
    with pytest.raises(InconsistentJoints):
        direct_kinematics([1000.0, 1000.0, 1000.0])


def test_fk_degenerate_joint():
    with pytest.raises(DegenerateJoint):
        direct_kinematics([0.0, L, L])
    with pytest.raises(DegenerateJoint):
        direct_kinematics([1.0, L, L], ParameterDeviation((-1.0, 0, 0)))


def test_leg_angles_zero_posture():
    ang = leg_angles([0, 0, 0], [L, L, L])
    np.testing.assert_allclose(ang.theta, [math.pi] * 3, atol=1e-15)
    np.testing.assert_allclose(ang.beta, [0, 0, 0], atol=1e-15)


def test_leg_angles_xmax_x_leg():
    p = np.array([60.0, 0, 0])
    ang = leg_angles(p, inverse_kinematics(p))
    assert ang.beta[0] == 0.0
    assert math.cos(ang.theta[0]) == pytest.approx(-1.0, abs=1e-15)


def test_leg_angles_reconstruction(rng):
    for _ in range(50):
        dev = random_dev(rng)
        p = rng.uniform(-60, 60, 3)
        rho = inverse_kinematics(p, dev)
        ang = leg_angles(p, rho, dev)
        assert np.all(np.abs(ang.beta) < math.pi / 2)
        assert np.all((ang.theta >= 0) & (ang.theta < 2 * math.pi))
        rec = tcp_from_leg_angles(rho, ang, dev)
        assert np.max(np.abs(rec - p)) < 1e-9


def test_leg_angles_inconsistent():
    with pytest.raises(InconsistentPose):
        leg_angles([1.0, 0, 0], [L, L, L])


def test_joint_limits():
    assert within_joint_limits([L, L, L])
    assert not within_joint_limits([L + 61, L, L])
    assert within_joint_limits([L + 60, L, L])
    assert within_joint_limits([L - 100, L, L])
    assert not within_joint_limits([L - 100.5, L, L])


def test_geometry_validation():
    with pytest.raises(ConfigError):
        MachineGeometry(leg_length=-1)
    with pytest.raises(ConfigError):
        MachineGeometry(joint_min=10, joint_max=5)
    with pytest.raises(ConfigError):
        MachineGeometry(leg_length=50, joint_min=-60)
    with pytest.raises(ConfigError):
        MachineGeometry.from_dict({"leg_length": 300, "colour": "red"})
    assert MachineGeometry.from_dict({}) == MachineGeometry()


def test_deviation_sanity_bound():
    with pytest.raises(ConfigError):
        inverse_kinematics([0, 0, 0], ParameterDeviation((40, 0, 0)))
    with pytest.raises(ConfigError):
        ParameterDeviation((math.nan, 0, 0))
    dev = ParameterDeviation.from_vector([1, 2, 3, 4, 5, 6])
    assert ParameterDeviation.from_dict(dev.to_dict()) == dev


@settings(max_examples=200, deadline=None)
@given(st.tuples(coord, coord, coord), st.tuples(*[small] * 6))
def test_roundtrip_property(p, d):
    dev = ParameterDeviation.from_vector(d)
    p = np.array(p)
    rho = inverse_kinematics(p, dev)
    assert np.max(np.abs(direct_kinematics(rho, dev) - p)) < 1e-9


@settings(max_examples=200, deadline=None)
@given(st.tuples(coord, coord, coord), st.tuples(*[small] * 6))
def test_constraint_residual_property(p, d):
    dev = ParameterDeviation.from_vector(d)
    rho = inverse_kinematics(p, dev)
    assert np.max(np.abs(constraint_residual(p, rho, dev))) < 1e-9
    p2 = direct_kinematics(rho, dev)
    assert np.max(np.abs(constraint_residual(p2, rho, dev))) < 1e-9


@given(st.tuples(coord, coord, coord), st.floats(-5, 5))
def test_offset_equivariance(p, c):
    base = inverse_kinematics(p)
    shifted = inverse_kinematics(p, ParameterDeviation((c, c, c)))
    np.testing.assert_allclose(shifted, base - c, atol=1e-12)


@given(st.tuples(coord, coord, coord), st.permutations([0, 1, 2]))
def test_nominal_symmetry(p, perm):
    p = np.array(p)
    np.testing.assert_allclose(inverse_kinematics(p[perm]), inverse_kinematics(p)[perm], atol=1e-12)
