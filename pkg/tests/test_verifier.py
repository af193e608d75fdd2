import json
import logging

import numpy as np
import pytest

from patchplan.scenario_library import build_scenario
from patchplan.selftest import corrupt, static_hang
from patchplan.trajectory import DiscreteVariables, ShapeError, TrajectoryVariables
from patchplan.verifier import (EXIT_FAIL, EXIT_PASS, FAMILIES, ToleranceSet, dynamics_residual_profile,
                                verify)


@pytest.fixture
def hang(standing):
    return static_hang(standing)


def test_static_hang_passes(standing, hang):
    traj, disc = hang
    report = verify(standing, traj, disc)
    assert report.passed, report.table()
    assert list(report.families) == [name for name, _ in FAMILIES]
    assert report.exit_code == EXIT_PASS
    assert report["cardinality"].worst_step is None


@pytest.mark.parametrize("kind, family", [
    ("lift", "contact_logic"),
    ("force", "dynamics_force"),
    ("drop", "contact_wrench"),
    ("slip", "patch_membership"),
    ("absent", "cardinality"),
    ("fractional", "discrete"),
])
def test_corruptions_are_caught(standing, hang, kind, family):
    traj, disc = hang
    corrupt(standing, traj, disc, kind)
    report = verify(standing, traj, disc)
    assert not report.passed
    assert family in report.failed_families
    assert report.exit_code == EXIT_FAIL


def test_contact_off_the_plane_breaks_membership(standing, hang):
    traj, disc = hang
    i = standing.robot.active_fingers[0]
    traj.p[:, i, 2] += 0.01
    traj.p[:, i + 1, 2] += 0.01
    report = verify(standing, traj, disc)
    assert "patch_membership" in report.failed_families
    assert report.violation("contact_logic") == 0.0


def test_force_corruption_size(standing, hang):
    traj, disc = hang
    corrupt(standing, traj, disc, "force")
    report = verify(standing, traj, disc)
    assert report.violation("dynamics_force") == pytest.approx(3.0)
    assert report["dynamics_force"].worst_step == 0


def test_slip_keeps_balance(standing, hang):
    traj, disc = hang
    corrupt(standing, traj, disc, "slip")
    profile = dynamics_residual_profile(standing, traj)
    assert profile.max_force < 1e-9
    assert profile.max_moment < 1e-9


def test_fractional_contact_counts_once(standing, hang):
    traj, disc = hang
    corrupt(standing, traj, disc, "fractional")
    report = verify(standing, traj, disc)
    assert report.failed_families == ["discrete"]
    assert report.violation("discrete") == 1
    assert report["discrete"].worst_step == 0


def test_torsion_sign_must_match_selector(climbing):
    traj = TrajectoryVariables.for_scenario(climbing)
    disc = DiscreteVariables.for_scenario(climbing)
    disc.alpha[0, 0, 0] = 1
    traj.m[0, 0, 0, 2] = -0.2
    traj.mz_minus[0, 0, 0] = 0.2
    assert disc.gamma[0, 0, 0] == 1
    assert verify(climbing, traj, disc).violation("discrete") == 2
    disc.gamma[0, 0, 0] = 0
    assert verify(climbing, traj, disc).violation("discrete") == 0


def test_shape_mismatch(standing, climbing):
    traj = TrajectoryVariables.for_scenario(climbing)
    with pytest.raises(ShapeError):
        verify(standing, traj, DiscreteVariables.for_scenario(standing))


def test_collision_depth():
    s = build_scenario("climbing-obstacles", "desk", horizon=2)
    traj = TrajectoryVariables.for_scenario(s)
    disc = DiscreteVariables.for_scenario(s)
    obstacle = s.obstacles[0]
    traj.p[1, 0] = obstacle.position
    report = verify(s, traj, disc)
    assert report.violation("collision") == pytest.approx(float(np.min(obstacle.half_extents)))
    assert report["collision"].worst_step == 1


def _paired(s):
    return next((c, s.region_index(r.pair)) for c, r in enumerate(s.regions) if r.pair is not None)


def test_paired_fingers_share_shear(climbing):
    traj = TrajectoryVariables.for_scenario(climbing)
    disc = DiscreteVariables.for_scenario(climbing)
    c, c2 = _paired(climbing)
    disc.alpha[0, 0, c] = 1
    disc.alpha[0, 1, c2] = 1
    traj.f[0, 0, c] = [1.0, 0.0, 5.0]
    traj.f[0, 1, c2] = [0.0, 0.0, 5.0]
    report = verify(climbing, traj, disc)
    assert report.violation("paired_fingers") == pytest.approx(1.0)


def test_same_hold_unpaired_faces_are_blocked(climbing):
    traj = TrajectoryVariables.for_scenario(climbing)
    disc = DiscreteVariables.for_scenario(climbing)
    c = 0
    c2 = next(k for k, r in enumerate(climbing.regions)
              if k != c and r.hold == climbing.regions[c].hold and climbing.regions[c].pair != r.id)
    disc.alpha[0, 0, c] = 1
    disc.alpha[0, 1, c2] = 1
    report = verify(climbing, traj, disc)
    assert report.violation("cardinality") >= 1


def test_desk_tolerances():
    desk = ToleranceSet.desk()
    assert desk.moment == 0.5
    assert desk.for_unit("N*m") == 0.5
    assert desk.for_unit("m") == ToleranceSet().position
    assert desk.for_unit("count") == 0.0


def test_report_outputs(tmp_path, standing, hang):
    traj, disc = hang
    report = verify(standing, traj, disc)
    data = json.loads(report.write_json(tmp_path / "report.json").read_text())
    assert data["passed"] is True
    assert data["failed"] == []
    assert len(data["families"]["dynamics_force"]["series"]) == standing.horizon + 1
    assert report.table().splitlines()[-1] == "overall: PASS"


def test_moment_residual_undefined_at_gimbal_lock(standing, hang, caplog):
    traj, _ = hang
    traj.theta[1, 1] = np.pi / 2
    with caplog.at_level(logging.WARNING, logger="patchplan.verifier"):
        profile = dynamics_residual_profile(standing, traj)
    assert np.isinf(profile.max_moment)
    assert "undefined" in caplog.text
