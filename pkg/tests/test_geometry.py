import numpy as np
import pytest

from patchplan.geometry import (Pose, RigidTransform, SingularityError, Wrench, angular_velocity, euler_angles,
                                euler_rate_matrix, euler_rate_partials, rotation_matrix, rotation_partials, skew,
                                transform_wrench)


def test_rotation_matrix_is_zyx():
    theta = [0.3, -0.2, 1.1]
    c = np.cos
    s = np.sin
    roll, pitch, yaw = theta
    rx = np.array([[1, 0, 0], [0, c(roll), -s(roll)], [0, s(roll), c(roll)]])
    ry = np.array([[c(pitch), 0, s(pitch)], [0, 1, 0], [-s(pitch), 0, c(pitch)]])
    rz = np.array([[c(yaw), -s(yaw), 0], [s(yaw), c(yaw), 0], [0, 0, 1]])
    np.testing.assert_allclose(rotation_matrix(theta), rz @ ry @ rx, atol=1e-12)


def test_quarter_yaw_maps_x_to_y():
    np.testing.assert_allclose(rotation_matrix([0, 0, np.pi / 2]) @ [1, 0, 0], [0, 1, 0], atol=1e-12)


@pytest.mark.parametrize("theta", [[0.3, -0.2, 1.1], [0.5, np.pi / 2, 0.4], [0.0, -np.pi / 2, -0.7]])
def test_euler_angles_rebuild_the_matrix(theta):
    R = rotation_matrix(theta)
    np.testing.assert_allclose(rotation_matrix(euler_angles(R)), R, atol=1e-9)


def test_euler_angles_zero_roll_at_gimbal_lock():
    np.testing.assert_allclose(euler_angles(rotation_matrix([0.0, -np.pi / 2, -0.7])), [0.0, -np.pi / 2, -0.7],
                               atol=1e-9)


def test_rotation_partials_match_central_differences():
    theta = np.array([0.4, 0.3, -0.7])
    partials = rotation_partials(theta)
    h = 1e-6
    for k in range(3):
        step = np.zeros(3)
        step[k] = h
        fd = (rotation_matrix(theta + step) - rotation_matrix(theta - step)) / (2 * h)
        np.testing.assert_allclose(partials[k], fd, atol=1e-8)


def test_euler_rates_give_angular_velocity():
    # A pure yaw rate is a rotation about world z whatever the pitch.
    omega = angular_velocity([0.2, 0.4, 0.1], [0.0, 0.0, 1.5])
    np.testing.assert_allclose(omega, [0, 0, 1.5], atol=1e-12)


def test_euler_rate_matrix_matches_rotation_derivative():
    theta = np.array([0.1, 0.5, -0.3])
    rates = np.array([0.7, -0.2, 0.4])
    h = 1e-6
    dR = (rotation_matrix(theta + h * rates) - rotation_matrix(theta - h * rates)) / (2 * h)
    omega_hat = dR @ rotation_matrix(theta).T
    omega = np.array([omega_hat[2, 1], omega_hat[0, 2], omega_hat[1, 0]])
    np.testing.assert_allclose(euler_rate_matrix(theta) @ rates, omega, atol=1e-7)


def test_euler_rate_partials_match_central_differences():
    theta = np.array([0.2, -0.6, 0.9])
    rates = np.array([0.3, 1.1, -0.5])
    jac = euler_rate_partials(theta, rates)
    h = 1e-6
    for k in range(3):
        step = np.zeros(3)
        step[k] = h
        fd = (euler_rate_matrix(theta + step) @ rates - euler_rate_matrix(theta - step) @ rates) / (2 * h)
        np.testing.assert_allclose(jac[:, k], fd, atol=1e-8)


def test_euler_rates_singular_at_gimbal_lock():
    with pytest.raises(SingularityError):
        euler_rate_matrix([0.0, np.pi / 2, 0.0])
    euler_rate_matrix([0.0, np.pi / 2 - 0.01, 0.0])


def test_skew_is_cross_product():
    a, b = np.array([1.0, -2.0, 0.5]), np.array([0.3, 0.1, 2.0])
    np.testing.assert_allclose(skew(a) @ b, np.cross(a, b))


def test_transform_compose_and_inverse():
    a = RigidTransform.from_euler([0.1, 0.2, 0.3], [1, 2, 3], "body", "world")
    b = RigidTransform.from_euler([-0.4, 0.0, 0.5], [0, -1, 0.5], "finger", "body")
    ab = a.compose(b)
    p = np.array([0.2, -0.3, 0.7])
    np.testing.assert_allclose(ab.apply(p), a.apply(b.apply(p)))
    assert ab.compose(ab.inverse()).is_close(RigidTransform.identity())
    np.testing.assert_allclose(a.apply_inverse(a.apply(p)), p)


def test_transform_rejects_mismatched_frames():
    a = RigidTransform.identity("body", "world")
    b = RigidTransform.identity("finger", "gripper")
    with pytest.raises(ValueError, match="cannot compose"):
        a.compose(b)


def test_transform_rejects_non_rotation():
    with pytest.raises(ValueError, match="orthonormal"):
        RigidTransform(np.diag([1.0, 1.0, 2.0]), np.zeros(3))
    with pytest.raises(ValueError, match="determinant"):
        RigidTransform(np.diag([1.0, 1.0, -1.0]), np.zeros(3))


def test_euler_roundtrip_away_from_singularity():
    angles = np.array([0.3, -0.4, 2.0])
    np.testing.assert_allclose(RigidTransform.from_euler(angles, np.zeros(3)).euler(), angles, atol=1e-12)


def test_pose_transform_and_validation():
    pose = Pose([1.0, 0.0, 0.0], [0.0, 0.0, np.pi])
    np.testing.assert_allclose(pose.transform().apply([1.0, 0.0, 0.0]), [0.0, 0.0, 0.0], atol=1e-12)
    with pytest.raises(ValueError, match="finite"):
        Pose([np.nan, 0, 0], [0, 0, 0])


def test_wrench_rotates_without_lever_arm():
    T = RigidTransform.from_euler([0, 0, np.pi / 2], [5, 5, 5], "region", "world")
    w = transform_wrench(T, Wrench([1, 0, 0], [0, 0, 2], "region"))
    np.testing.assert_allclose(w.force, [0, 1, 0], atol=1e-12)
    np.testing.assert_allclose(w.moment, [0, 0, 2], atol=1e-12)
    assert w.frame == "world"
    with pytest.raises(ValueError, match="frame"):
        transform_wrench(T, Wrench.zero("other"))


def test_wrench_vector_shape():
    assert Wrench.from_vector(np.arange(6.0)).as_vector().tolist() == list(range(6))
    with pytest.raises(ValueError, match="6 components"):
        Wrench.from_vector([1, 2, 3])
