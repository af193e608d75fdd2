import numpy as np
import pytest

from patchplan.layout import VariableLayout
from patchplan.smooth_constraints import build_smooth_dynamics
from patchplan.transcription import build_kinematics
from patchplan.trajectory import TrajectoryVariables


def _standing(s, theta=(0.0, 0.0, 0.0)):
    traj = TrajectoryVariables.for_scenario(s)
    r = s.body_state("initial")["r"]
    p, q = s.nominal_fingers(r, theta)
    traj.r[:] = r
    traj.theta[:] = theta
    traj.p[:] = p
    traj.q[:] = q
    active = list(s.robot.active_fingers)
    traj.lam[:, active] = -s.robot.mass * s.robot.gravity / len(active)
    return traj


def _residual(smooth, name):
    return next(r for r in smooth.residuals if r.name == name)


def test_residual_sizes(walking):
    layout = VariableLayout(walking, contacts=False)
    smooth = build_smooth_dynamics(walking, layout)
    N = walking.horizon
    assert len(smooth) == 3 * N + 3 * (N + 1) * len(walking.robot.active_fingers)
    assert _residual(smooth, "moment_dynamics").kind == "equality"
    assert _residual(smooth, "kinematics_exact").kind == "inequality"


def test_symmetric_stance_is_in_moment_balance(walking):
    layout = VariableLayout(walking, contacts=False)
    smooth = build_smooth_dynamics(walking, layout)
    assert smooth.max_violation(layout.pack(_standing(walking))) < 1e-9


def test_moment_residual_sees_finger_torque(walking):
    layout = VariableLayout(walking, contacts=False)
    traj = _standing(walking)
    traj.tau[1, 0] = [0.0, 0.0, 1.5]
    values = _residual(build_smooth_dynamics(walking, layout), "moment_dynamics").fun(layout.pack(traj))
    np.testing.assert_allclose(values.reshape(-1, 3)[1], [0.0, 0.0, -1.5], atol=1e-12)


def test_moment_residual_sees_lever_arm(walking):
    layout = VariableLayout(walking, contacts=False)
    traj = _standing(walking)
    # all weight on the front-left foot
    traj.lam[0] = 0.0
    traj.lam[0, 0] = -walking.robot.mass * walking.robot.gravity
    values = _residual(build_smooth_dynamics(walking, layout), "moment_dynamics").fun(layout.pack(traj))
    arm = traj.r[0] - traj.p[0, 0]
    np.testing.assert_allclose(values[:3], -np.cross(arm, traj.lam[0, 0]), atol=1e-9)


def test_exact_kinematics_follow_body_yaw(walking):
    layout = VariableLayout(walking, contacts=False)
    x = layout.pack(_standing(walking, theta=(0.0, 0.0, 1.0)))
    smooth = build_smooth_dynamics(walking, layout)
    kinematics = _residual(smooth, "kinematics_exact")
    values = kinematics.fun(x)
    assert np.all(values >= kinematics.lower - 1e-9) and np.all(values <= kinematics.upper + 1e-9)
    # the linear boxes hold the rotation at zero yaw and reject the same stance
    rows = build_kinematics(walking, layout).select(["kinematics_position"])
    assert rows.max_violation(x) > 0.1


def test_jacobians_match_central_differences(climbing):
    layout = VariableLayout(climbing, contacts=False)
    smooth = build_smooth_dynamics(climbing, layout)
    x = np.random.default_rng(3).uniform(-0.5, 0.5, layout.n)
    assert smooth.check_jacobians(x) < 1e-5


def test_jacobian_shape(climbing):
    layout = VariableLayout(climbing, contacts=False)
    smooth = build_smooth_dynamics(climbing, layout)
    J = smooth.jacobian(np.zeros(layout.n))
    assert J.shape == (len(smooth), layout.n)
    assert smooth.values(np.zeros(layout.n)).shape == (len(smooth),)


def test_limb_layout_moment_covers_own_fingers(climbing):
    layout = VariableLayout(climbing, fingers=[2, 3], contacts=False, slack=True)
    moment = _residual(build_smooth_dynamics(climbing, layout), "moment_dynamics")
    assert set(layout.at("lambda", 0, 2)).issubset(moment.columns)
    assert not set(layout.tables["slack"].ravel()) & set(moment.columns)
    assert moment.size == 3 * climbing.horizon


@pytest.mark.parametrize("yaw", [-2.5, 0.4])
def test_moment_balance_is_yaw_invariant(walking, yaw):
    layout = VariableLayout(walking, contacts=False)
    smooth = build_smooth_dynamics(walking, layout)
    x = layout.pack(_standing(walking, theta=(0.0, 0.0, yaw)))
    assert _residual(smooth, "moment_dynamics").fun(x) == pytest.approx(np.zeros(3 * walking.horizon), abs=1e-9)
