from pathlib import Path

import pytest

from patchplan.config import (RunConfig, create_default_config, get_default_config_path, get_thread_limit)


def _write(tmp_path, text):
    path = tmp_path / "config.yaml"
    path.write_text(text)
    return path


def test_template_loads(tmp_path):
    path = tmp_path / "nested" / "config.yaml"
    create_default_config(path)
    config = RunConfig.load(path)
    assert config.scenario == Path("~/patchplan/walking-flat-desk.json").expanduser()
    assert config.mode == "two-block"
    assert config.iterations == 10
    assert config.rho is None
    assert config.tol_moment is None
    assert config.output_dir == Path("~/patchplan/out").expanduser()
    assert not config.verbose


def test_load_full_file(tmp_path):
    path = _write(tmp_path, """
run:
  scenario: $SCENARIO_DIR/climb.json
  mode: multi-block
  seed: 7
overrides:
  rho: 4.0
  horizon: 6
  dt: 0.5
tolerances:
  moment: 0.2
output:
  directory: out
  verbose: true
""")
    config = RunConfig.load(path)
    assert config.mode == "multi-block"
    assert (config.rho, config.horizon, config.dt) == (4.0, 6, 0.5)
    assert config.tol_moment == 0.2
    assert config.tol_position == 0.03
    assert config.seed == 7
    assert config.verbose
    assert config.scenario.name == "climb.json"


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError, match="Configuration file not found"):
        RunConfig.load(tmp_path / "absent.yaml")


def test_empty_file(tmp_path):
    with pytest.raises(ValueError, match="empty"):
        RunConfig.load(_write(tmp_path, ""))


def test_scenario_is_required(tmp_path):
    with pytest.raises(ValueError, match="run.scenario"):
        RunConfig.load(_write(tmp_path, "run:\n  mode: two-block\n"))


@pytest.mark.parametrize("field, value, message", [
    ("mode", "three-block", "Invalid mode"),
    ("iterations", 0, "Iterations"),
    ("rho", -1.0, "Rho"),
    ("horizon", 1, "Horizon"),
    ("dt", 0.0, "Time step"),
    ("tol_force", 0.0, "tol_force"),
])
def test_validation(field, value, message):
    with pytest.raises(ValueError, match=message):
        RunConfig(**{field: value})


def test_with_overrides_skips_none():
    config = RunConfig(rho=2.0, horizon=5)
    updated = config.with_overrides(rho=3.0, horizon=None, mode="multi-block")
    assert updated.rho == 3.0
    assert updated.horizon == 5
    assert updated.mode == "multi-block"
    assert config.rho == 2.0
    with pytest.raises(ValueError):
        config.with_overrides(iterations=0)


def test_default_path_follows_xdg(monkeypatch, tmp_path):
    monkeypatch.setenv("XDG_CONFIG_HOME", str(tmp_path))
    assert get_default_config_path() == tmp_path / "patchplan" / "config.yaml"


def test_thread_limit(monkeypatch):
    monkeypatch.delenv("PATCHPLAN_THREADS", raising=False)
    assert get_thread_limit() is None
    monkeypatch.setenv("PATCHPLAN_THREADS", "3")
    assert get_thread_limit() == 3
    for bad in ("0", "many"):
        monkeypatch.setenv("PATCHPLAN_THREADS", bad)
        with pytest.raises(ValueError, match="positive integer"):
            get_thread_limit()
