import sys

import pytest

from patchplan.config import RunConfig
from patchplan.main import (EXIT_INPUT, _parse_counts, cli, cmd_dump, cmd_plan, cmd_scenarios, cmd_verify,
                            resolve_scenario, tolerances_for)
from patchplan.scenario import save_scenario
from patchplan.selftest import corrupt, static_hang
from patchplan.trajectory import export_contacts_csv, export_trajectory_csv
from patchplan.verifier import EXIT_FAIL, EXIT_PASS, EXIT_SHAPE


@pytest.fixture
def hang_files(tmp_path, standing):
    scenario = save_scenario(standing, tmp_path / "standing.json")
    traj, disc = static_hang(standing)
    return scenario, traj, disc


def _write_plan(tmp_path, standing, traj, disc):
    return (export_trajectory_csv(traj, tmp_path / "trajectory.csv"),
            export_contacts_csv(traj, disc, standing, tmp_path / "contacts.csv"))


def test_resolve_shipped_names():
    assert resolve_scenario("walking-flat").name == "walking-flat-desk"
    assert resolve_scenario("climbing-4-holds-full").name == "climbing-4-holds-full"
    with pytest.raises(FileNotFoundError, match="Scenario file not found"):
        resolve_scenario("no-such-scenario")


def test_resolve_file(hang_files, standing):
    scenario, _, _ = hang_files
    assert resolve_scenario(scenario).horizon == standing.horizon


def test_moment_tolerance_follows_scale():
    config = RunConfig()
    assert tolerances_for(config, resolve_scenario("walking-flat")).moment == 0.5
    assert tolerances_for(config, resolve_scenario("walking-flat-full")).moment == 0.05
    assert tolerances_for(RunConfig(tol_moment=0.2), resolve_scenario("walking-flat")).moment == 0.2


def test_parse_counts():
    assert _parse_counts(["qp=3", "miqp=0"]) == {"qp": 3, "miqp": 0}
    assert _parse_counts(None) == {}
    for bad in ("qp", "qp=-1", "fuzz=2"):
        with pytest.raises(ValueError, match="Invalid suite count"):
            _parse_counts([bad])


def test_verify_passes_static_hang(tmp_path, hang_files, standing):
    scenario, traj, disc = hang_files
    trajectory, contacts = _write_plan(tmp_path, standing, traj, disc)
    assert cmd_verify(RunConfig(scenario=scenario), trajectory, contacts) == EXIT_PASS


def test_verify_reports_failure(tmp_path, hang_files, standing, capsys):
    scenario, traj, disc = hang_files
    corrupt(standing, traj, disc, "force")
    trajectory, contacts = _write_plan(tmp_path, standing, traj, disc)
    assert cmd_verify(RunConfig(scenario=scenario), trajectory, contacts) == EXIT_FAIL
    assert "dynamics_force" in capsys.readouterr().out


def test_verify_missing_file(tmp_path, hang_files, capsys):
    scenario, _, _ = hang_files
    code = cmd_verify(RunConfig(scenario=scenario), tmp_path / "absent.csv", tmp_path / "absent.csv")
    assert code == EXIT_SHAPE
    assert capsys.readouterr().err.startswith("Error:")


def test_plan_without_scenario(capsys):
    assert cmd_plan(RunConfig()) == EXIT_INPUT
    assert "No scenario given" in capsys.readouterr().err


def test_dump(tmp_path):
    config = RunConfig(scenario="walking-flat", horizon=3, output_dir=tmp_path)
    assert cmd_dump(config) == 0
    header = (tmp_path / "miqp_constraints.txt").read_text().splitlines()[0]
    assert header.startswith("# ")
    assert (tmp_path / "nlp_constraints.txt").exists()


def test_scenarios_listing(capsys):
    assert cmd_scenarios(None) == 0
    assert "walking-flat-desk" in capsys.readouterr().out


def test_cli_without_command(monkeypatch, tmp_path):
    monkeypatch.setenv("XDG_CONFIG_HOME", str(tmp_path))
    monkeypatch.setattr(sys, "argv", ["patchplan"])
    with pytest.raises(SystemExit) as exit_info:
        cli()
    assert exit_info.value.code == 1


def test_cli_missing_config(monkeypatch, tmp_path, capsys):
    monkeypatch.setattr(sys, "argv", ["patchplan", "--config", str(tmp_path / "absent.yaml"), "plan"])
    with pytest.raises(SystemExit) as exit_info:
        cli()
    assert exit_info.value.code == EXIT_INPUT
    assert "patchplan init" in capsys.readouterr().err


def test_cli_init(monkeypatch, tmp_path):
    path = tmp_path / "config.yaml"
    monkeypatch.setattr(sys, "argv", ["patchplan", "--config", str(path), "init"])
    cli()
    assert RunConfig.load(path).mode == "two-block"
