import numpy as np
import pytest

from patchplan.trajectory import (CONTACTS_HEADER, DiscreteVariables, ShapeError, TrajectoryVariables,
                                  export_contacts_csv, export_trajectory_csv, import_contacts_csv,
                                  import_trajectory_csv, trajectory_header)


def _filled(s, seed=0):
    rng = np.random.default_rng(seed)
    traj = TrajectoryVariables.for_scenario(s)
    for name in ("r", "theta", "rdot", "thetadot", "p", "q", "lam", "tau", "f", "m"):
        getattr(traj, name)[...] = rng.normal(size=getattr(traj, name).shape)
    for l in range(s.robot.n_limbs):
        traj.d[:, l] = traj.p[:, 2 * l + 1] - traj.p[:, 2 * l]
    disc = DiscreteVariables.for_scenario(s)
    disc.alpha[0, 0, 0] = 1
    disc.alpha[1, 2, 1] = 1
    return traj, disc


def test_shapes_follow_scenario(climbing):
    traj = TrajectoryVariables.for_scenario(climbing)
    N, n_f, C = climbing.horizon, climbing.robot.n_fingers, climbing.n_regions
    assert traj.r.shape == (N + 1, 3)
    assert traj.lam.shape == (N, n_f, 3)
    assert traj.f.shape == (N, n_f, C, 3)
    assert traj.horizon == N
    traj.check_shapes(climbing)


def test_check_shapes_names_the_field(climbing):
    traj = TrajectoryVariables.for_scenario(climbing)
    traj.lam = np.zeros((1, 1, 3))
    with pytest.raises(ShapeError, match="'lam'"):
        traj.check_shapes(climbing)


def test_discrete_defaults(climbing):
    disc = DiscreteVariables.for_scenario(climbing)
    assert disc.alpha.dtype == np.int8
    assert np.all(disc.gamma == 1)
    assert not disc.in_contact(0, 0)
    assert disc.contact_region(0, 0) is None
    disc.alpha[0, 0, 2] = 1
    assert disc.contact_region(0, 0) == 2


def test_discrete_rejects_fractional_values():
    with pytest.raises(ValueError, match="strictly binary"):
        DiscreteVariables(np.full((1, 1, 1), 0.5), np.zeros((1, 1, 0, 6)), np.ones((1, 1, 1)))


def test_copy_is_independent(climbing):
    traj, disc = _filled(climbing)
    other = traj.copy()
    other.r[0, 0] += 1.0
    assert other.r[0, 0] != traj.r[0, 0]
    assert disc.copy().alpha is not disc.alpha


def test_trajectory_csv_roundtrip(tmp_path, climbing):
    traj, _ = _filled(climbing)
    path = export_trajectory_csv(traj, tmp_path / "trajectory.csv")
    back = import_trajectory_csv(path, climbing)
    for name in ("r", "theta", "rdot", "thetadot", "p", "q", "d", "lam", "tau"):
        np.testing.assert_array_equal(getattr(back, name), getattr(traj, name))


def test_trajectory_csv_layout(tmp_path, walking):
    traj = TrajectoryVariables.for_scenario(walking)
    path = export_trajectory_csv(traj, tmp_path / "trajectory.csv")
    lines = path.read_text().splitlines()
    assert lines[0].split(",") == trajectory_header(walking.robot.n_fingers)
    assert len(lines) == walking.horizon + 2
    # lambda and tau are not defined at the last step
    assert lines[-1].split(",")[12 + 7] == ""


def test_contacts_csv_roundtrip(tmp_path, climbing):
    traj, disc = _filled(climbing)
    path = export_contacts_csv(traj, disc, climbing, tmp_path / "contacts.csv")
    back = traj.copy()
    back.f[...] = 0.0
    back.m[...] = 0.0
    read = import_contacts_csv(path, climbing, back)
    np.testing.assert_array_equal(read.alpha, disc.alpha)
    np.testing.assert_array_equal(back.f, traj.f)
    np.testing.assert_array_equal(back.m, traj.m)
    np.testing.assert_allclose(back.mz_plus - back.mz_minus, traj.m[..., 2])
    assert np.all(read.gamma[traj.m[..., 2] < 0] == 0)


def test_contacts_csv_header(tmp_path, walking):
    traj = TrajectoryVariables.for_scenario(walking)
    path = export_contacts_csv(traj, DiscreteVariables.for_scenario(walking), walking, tmp_path / "c.csv")
    lines = path.read_text().splitlines()
    assert lines[0].split(",") == CONTACTS_HEADER
    assert len(lines) == 1 + walking.horizon * walking.robot.n_fingers * walking.n_regions


def test_truncated_trajectory_is_shape_error(tmp_path, walking):
    path = export_trajectory_csv(TrajectoryVariables.for_scenario(walking), tmp_path / "trajectory.csv")
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(ShapeError, match="rows"):
        import_trajectory_csv(path, walking)


def test_bad_cell_is_shape_error(tmp_path, walking):
    path = export_trajectory_csv(TrajectoryVariables.for_scenario(walking), tmp_path / "trajectory.csv")
    lines = path.read_text().splitlines()
    cells = lines[1].split(",")
    cells[1] = "abc"
    lines[1] = ",".join(cells)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ShapeError, match="not a number"):
        import_trajectory_csv(path, walking)


def test_fractional_alpha_is_shape_error(tmp_path, walking):
    traj = TrajectoryVariables.for_scenario(walking)
    path = export_contacts_csv(traj, DiscreteVariables.for_scenario(walking), walking, tmp_path / "c.csv")
    lines = path.read_text().splitlines()
    cells = lines[1].split(",")
    cells[3] = "0.5"
    lines[1] = ",".join(cells)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ShapeError, match="alpha"):
        import_contacts_csv(path, walking, traj)


def test_missing_csv(tmp_path, walking):
    with pytest.raises(FileNotFoundError):
        import_trajectory_csv(tmp_path / "none.csv", walking)
