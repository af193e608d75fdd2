import numpy as np
import pytest

from patchplan.layout import VariableLayout
from patchplan.scenario_library import build_scenario
from patchplan.trajectory import DiscreteVariables, TrajectoryVariables


def _random_plan(s, seed=0):
    rng = np.random.default_rng(seed)
    traj = TrajectoryVariables.for_scenario(s)
    for name in ("r", "theta", "rdot", "thetadot", "p", "q", "d", "lam", "tau", "f", "m", "mz_plus", "mz_minus",
                 "spine"):
        value = getattr(traj, name)
        value[...] = rng.normal(size=value.shape)
    disc = DiscreteVariables.for_scenario(s)
    disc.alpha[...] = rng.integers(0, 2, size=disc.alpha.shape)
    return traj, disc


def test_full_layout_size(walking):
    layout = VariableLayout(walking)
    N = walking.horizon
    assert layout.n_x == walking.n_x
    assert layout.n_u == walking.n_u
    assert len(layout) == layout.n_x * (N + 1) + (layout.n_u + layout.n_y + layout.n_aux + layout.n_z) * N


def test_layout_is_time_major(walking):
    layout = VariableLayout(walking)
    assert layout.x_indices(0)[0] == 0
    x1 = layout.x_indices(1)[0]
    assert layout.u_indices(0).max() < x1
    assert layout.z_indices(0).max() < x1
    assert layout.at("r", walking.horizon, 0) > layout.at("lambda", walking.horizon - 1, 0, 0)


def test_full_layout_state_map_is_identity(walking):
    layout = VariableLayout(walking)
    np.testing.assert_array_equal(layout.state_map, np.arange(walking.n_x))
    np.testing.assert_array_equal(layout.control_map, np.arange(walking.n_u))
    np.testing.assert_array_equal(layout.discrete_map, np.arange(walking.n_z))


def test_layout_without_contacts_has_no_binaries(walking):
    layout = VariableLayout(walking, contacts=False)
    assert not layout.has("alpha")
    assert not layout.has("f")
    assert layout.binary_indices.size == 0
    assert layout.z_indices(0).size == 0


def test_limb_layout_needs_both_fingers(walking):
    with pytest.raises(ValueError, match="both fingers"):
        VariableLayout(walking, fingers=[0])
    layout = VariableLayout(walking, fingers=[2, 3], name="limb-1")
    assert layout.limbs == (1,)
    assert layout.has_finger(3)
    assert not layout.has_finger(0)


def test_labels_use_global_finger_numbers(walking):
    layout = VariableLayout(walking, fingers=[2, 3])
    labels = layout.labels()
    assert labels[layout.at("p", 1, 2, 0)] == "p[1][2].x"
    assert labels[layout.at("d", 0, 1, 2)] == "d[0][1].z"
    assert all(labels)


def test_pack_unpack_roundtrip(climbing):
    layout = VariableLayout(climbing)
    traj, disc = _random_plan(climbing)
    back, back_disc = layout.unpack(layout.pack(traj, disc))
    for name in ("r", "p", "d", "lam", "f", "spine", "mz_minus"):
        np.testing.assert_array_equal(getattr(back, name), getattr(traj, name))
    np.testing.assert_array_equal(back_disc.alpha, disc.alpha)


def test_unpack_into_touches_only_layout_fingers(climbing):
    layout = VariableLayout(climbing, fingers=[0, 1], contacts=False)
    traj, _ = _random_plan(climbing)
    target = TrajectoryVariables.for_scenario(climbing)
    layout.unpack_into(layout.pack(traj), target)
    np.testing.assert_array_equal(target.p[:, :2], traj.p[:, :2])
    assert not np.any(target.p[:, 2:])
    assert not np.any(target.d[:, 1:])
    assert not np.any(target.f)


def test_bounds_fix_initial_state_and_target(walking):
    layout = VariableLayout(walking)
    lb, ub = layout.bounds()
    x0 = walking.state_vector("initial")
    np.testing.assert_array_equal(lb[layout.x_indices(0)], x0)
    np.testing.assert_array_equal(ub[layout.x_indices(0)], x0)
    N = walking.horizon
    np.testing.assert_array_equal(lb[layout.tables["r"][N]], walking.body_state("target")["r"])
    np.testing.assert_array_equal(ub[layout.tables["rdot"][N]], np.zeros(3))
    assert np.all(lb <= ub)


def test_bounds_for_point_contact_robot(walking):
    layout = VariableLayout(walking)
    lb, ub = layout.bounds()
    absent = layout.at("lambda", slice(None), 1)
    assert not np.any(lb[absent]) and not np.any(ub[absent])
    assert not np.any(ub[layout.at("tau", slice(None), 0)])
    assert not np.any(ub[layout.tables["d"]])
    assert not np.any(ub[layout.at("alpha", slice(None), 1)])
    assert np.all(ub[layout.at("alpha", slice(None), 0)] == 1.0)


def test_bounds_are_cached_copies(walking):
    layout = VariableLayout(walking)
    lb, _ = layout.bounds()
    lb[:] = -1.0
    np.testing.assert_array_equal(layout.bounds()[0][layout.x_indices(0)], walking.state_vector("initial"))


def test_contact_pin_fixes_alpha():
    s = build_scenario("patch-force-study", "desk", horizon=2)
    pin = next(p for p in s.pins if p.component == "contact")
    layout = VariableLayout(s)
    lb, ub = layout.bounds()
    idx = layout.at("alpha", slice(None), pin.finger, s.region_index(pin.region))
    assert np.all(lb[idx] == pin.value) and np.all(ub[idx] == pin.value)
