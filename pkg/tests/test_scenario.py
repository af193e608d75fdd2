import json

import numpy as np
import pytest

from patchplan.scenario import (AdmmSettings, ScenarioError, SolverSettings, apply_overrides, load_scenario,
                                save_scenario, scenario_from_dict)


def test_walking_scenario_shape(walking):
    robot = walking.robot
    assert robot.point_contact
    assert robot.n_fingers == 8
    assert robot.active_fingers == (0, 2, 4, 6)
    assert robot.limb_fingers(3) == (6, 7)
    assert robot.limb_of(5) == 2
    assert walking.n_regions == 1
    assert walking.n_obstacles == 0
    assert walking.n_x == 12 + 6 * 8 + 3 * 4
    assert walking.n_u == 6 * 8


def test_state_vector_offsets(walking):
    x = walking.state_vector("initial")
    off = walking.state_offsets
    np.testing.assert_allclose(x[off["r"]], walking.initial["r"])
    p = x[off["p"]].reshape(-1, 3)
    # absent fingers follow their partner, so every separation is zero
    np.testing.assert_allclose(p[1], p[0])
    np.testing.assert_allclose(x[off["d"]], 0.0)


def test_nominal_fingers_follow_body_rotation(climbing):
    r = np.array([0.1, 0.2, 0.3])
    p, q = climbing.nominal_fingers(r, np.zeros(3))
    np.testing.assert_allclose(p, r + climbing.robot.finger_offsets)
    np.testing.assert_allclose(q, climbing.robot.finger_orientations)


def test_weights_expand_by_family(walking):
    off = walking.state_offsets
    assert walking.Q.shape == (walking.n_x, walking.n_x)
    assert walking.Q[off["r"].start, off["r"].start] == pytest.approx(10.0)
    assert walking.R.shape == (walking.n_u, walking.n_u)
    assert walking.S.shape[0] == walking.n_z


def test_region_frames(climbing):
    for region in climbing.regions:
        normal = region.rotation @ [0.0, 0.0, 1.0]
        assert np.linalg.norm(normal) == pytest.approx(1.0)
        np.testing.assert_allclose(region.to_local(region.position), 0.0, atol=1e-12)
        assert region.torsion_constant == pytest.approx(0.67 * region.patch_radius)


def test_region_surface_kind(walking, climbing):
    assert walking.regions[0].surface.friction.point_contact
    assert not any(r.surface.friction.point_contact for r in climbing.regions)


def test_paired_faces_are_mutual(climbing):
    by_id = {r.id: r for r in climbing.regions}
    paired = [r for r in climbing.regions if r.pair is not None]
    assert paired
    for region in paired:
        assert by_id[region.pair].pair == region.id
        assert by_id[region.pair].hold == region.hold


def test_roundtrip_through_file(tmp_path, climbing):
    path = save_scenario(climbing, tmp_path / "climbing.json")
    assert load_scenario(path) == climbing
    assert json.loads(path.read_text())["schema_version"] == 1


def test_exponent_floats_reload_as_numbers(tmp_path, walking):
    path = save_scenario(walking, tmp_path / "walking.json")
    assert '"qp_tol": 1e-06' in path.read_text()
    loaded = load_scenario(path)
    assert isinstance(loaded.solver.qp_tol, float)
    assert loaded.solver.qp_tol == pytest.approx(1e-6)


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError, match="not found"):
        load_scenario(tmp_path / "missing.json")


def test_unparsable_file(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{ not json: [")
    with pytest.raises(ScenarioError, match="cannot parse"):
        load_scenario(path)


def test_missing_field_names_its_path(walking_document):
    del walking_document["robot"]["mass"]
    with pytest.raises(ScenarioError) as info:
        scenario_from_dict(walking_document)
    assert info.value.field == "robot.mass"


def test_bad_region_names_its_index(walking_document):
    walking_document["regions"][0]["mu"] = -1.0
    with pytest.raises(ScenarioError) as info:
        scenario_from_dict(walking_document)
    assert info.value.field == "regions[0].mu"


def test_short_horizon_rejected(walking_document):
    walking_document["horizon"] = 1
    with pytest.raises(ScenarioError, match="horizon too short"):
        scenario_from_dict(walking_document)


def test_duplicate_region_ids_rejected(walking_document):
    walking_document["regions"].append(dict(walking_document["regions"][0]))
    with pytest.raises(ScenarioError, match="unique"):
        scenario_from_dict(walking_document)


def test_unmatched_pair_rejected(walking_document):
    walking_document["regions"][0]["pair"] = "nowhere"
    with pytest.raises(ScenarioError, match="unknown region"):
        scenario_from_dict(walking_document)


def test_inverted_bounds_rejected(walking_document):
    walking_document["bounds"]["r"] = {"lower": [1, 1, 1], "upper": [0, 0, 0]}
    with pytest.raises(ScenarioError, match="lower must not exceed upper"):
        scenario_from_dict(walking_document)


def test_big_m_must_dominate_bounds(walking_document):
    walking_document["big_m"] = 10.0
    with pytest.raises(ScenarioError, match="big_m"):
        scenario_from_dict(walking_document)


def test_indefinite_weight_rejected(walking_document):
    walking_document["weights"]["Q"] = {"blocks": {"r": -1.0}}
    with pytest.raises(ScenarioError, match="positive semidefinite"):
        scenario_from_dict(walking_document)


def test_unknown_setting_rejected(walking_document):
    walking_document["admm"]["stepsize"] = 2
    with pytest.raises(ScenarioError) as info:
        scenario_from_dict(walking_document)
    assert info.value.field == "admm.stepsize"


def test_contact_pin_needs_region(walking_document):
    walking_document["pins"] = [{"finger": 0, "component": "contact", "value": 1}]
    with pytest.raises(ScenarioError, match="contact pins"):
        scenario_from_dict(walking_document)


def test_unsupported_schema_version(walking_document):
    walking_document["schema_version"] = 2
    with pytest.raises(ScenarioError, match="unsupported version"):
        scenario_from_dict(walking_document)


def test_apply_overrides(walking):
    changed = apply_overrides(walking, rho=3.0, horizon=5, dt=0.1, iterations=4)
    assert (changed.horizon, changed.dt, changed.admm.rho, changed.admm.iterations) == (5, 0.1, 3.0, 4)
    assert apply_overrides(walking) is walking
    with pytest.raises(ScenarioError):
        apply_overrides(walking, rho=-1.0)


def test_solver_tolerances_loosen_early():
    settings = SolverSettings(qp_tol=1e-6, nlp_tol=1e-7, loose_iterations=2, loose_tol=1e-3)
    assert settings.tolerances(1) == (1e-3, 1e-3)
    assert settings.tolerances(3) == (1e-6, 1e-7)


def test_block_rho():
    admm = AdmmSettings(rho=2.0, block_rho={"nlp": 5.0})
    assert admm.rho_for("nlp") == 5.0
    assert admm.rho_for("miqp") == 2.0
