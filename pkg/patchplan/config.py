"""Run configuration loading and validation."""

import logging
import os
import yaml
from pathlib import Path
from dataclasses import dataclass
from typing import Optional


logger = logging.getLogger(__name__)

MODES = ("two-block", "multi-block")
THREADS_ENV = "PATCHPLAN_THREADS"


@dataclass
class RunConfig:
    """Patchplan run configuration."""

    scenario: Optional[Path] = None
    mode: str = "two-block"
    iterations: Optional[int] = None
    rho: Optional[float] = None
    horizon: Optional[int] = None
    dt: Optional[float] = None
    tol_position: float = 0.03
    tol_force: float = 0.5
    tol_rotation: float = 0.05
    tol_moment: Optional[float] = None
    output_dir: Path = Path("patchplan-out")
    verbose: bool = False
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        """
        Raises:
            ValueError: If a field is out of range
        """
        if self.mode not in MODES:
            raise ValueError(f"Invalid mode: {self.mode}. Must be 'two-block' or 'multi-block'")
        if self.iterations is not None and self.iterations < 1:
            raise ValueError(f"Iterations must be at least 1, got: {self.iterations}")
        if self.rho is not None and self.rho <= 0:
            raise ValueError(f"Rho must be positive, got: {self.rho}")
        if self.horizon is not None and self.horizon < 2:
            raise ValueError(f"Horizon must be at least 2, got: {self.horizon}")
        if self.dt is not None and self.dt <= 0:
            raise ValueError(f"Time step must be positive, got: {self.dt}")
        for name in ("tol_position", "tol_force", "tol_rotation", "tol_moment"):
            if getattr(self, name) is not None and getattr(self, name) <= 0:
                raise ValueError(f"Tolerance {name} must be positive, got: {getattr(self, name)}")

    @classmethod
    def load(cls, config_path: Path) -> "RunConfig":
        """
        Load and validate configuration from YAML file.

        Args:
            config_path: Path to configuration file

        Returns:
            RunConfig instance

        Raises:
            ValueError: If configuration is invalid
            FileNotFoundError: If config file doesn't exist
        """
        if not config_path.exists():
            raise FileNotFoundError(f"Configuration file not found: {config_path}")

        with open(config_path) as f:
            data = yaml.safe_load(f)

        if not data:
            raise ValueError("Configuration file is empty")

        run = data.get('run', {})
        scenario = run.get('scenario')
        if scenario is None:
            raise ValueError("Missing required field: run.scenario")
        scenario = Path(os.path.expanduser(os.path.expandvars(str(scenario))))

        overrides = data.get('overrides', {}) or {}
        tolerances = data.get('tolerances', {}) or {}
        output = data.get('output', {}) or {}

        return cls(
            scenario=scenario,
            mode=run.get('mode', 'two-block'),
            iterations=run.get('iterations'),
            rho=overrides.get('rho'),
            horizon=overrides.get('horizon'),
            dt=overrides.get('dt'),
            tol_position=tolerances.get('position', 0.03),
            tol_force=tolerances.get('force', 0.5),
            tol_rotation=tolerances.get('rotation', 0.05),
            tol_moment=tolerances.get('moment'),
            output_dir=Path(os.path.expanduser(str(output.get('directory', 'patchplan-out')))),
            verbose=bool(output.get('verbose', False)),
            seed=run.get('seed', 0),
        )

    def with_overrides(self, **values) -> "RunConfig":
        """Copy with every non-None value replaced (command-line flags win over the file)."""
        fields = dict(self.__dict__)
        fields.update({key: value for key, value in values.items() if value is not None})
        return RunConfig(**fields)


def get_default_config_path() -> Path:
    """Get the default configuration file path."""
    xdg_config_home = os.environ.get('XDG_CONFIG_HOME', os.path.expanduser('~/.config'))
    return Path(xdg_config_home) / 'patchplan' / 'config.yaml'


def get_thread_limit() -> Optional[int]:
    """
    Cap on concurrent block solves from PATCHPLAN_THREADS.

    Returns:
        Positive thread count, or None when unset

    Raises:
        ValueError: If the variable is not a positive integer
    """
    value = os.environ.get(THREADS_ENV)
    if value is None or value.strip() == "":
        return None
    try:
        threads = int(value)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got: {value}") from None
    if threads < 1:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got: {value}")
    return threads


def create_default_config(config_path: Path) -> None:
    """Create a default configuration template file.

    Args:
        config_path: Path where the config file should be created
    """
    config_path.parent.mkdir(parents=True, exist_ok=True)

    template = """# Patchplan configuration

run:
  scenario: ~/patchplan/walking-flat-desk.json
  mode: two-block         # two-block or multi-block
  iterations: 10          # ADMM iterations (default: from the scenario)
  seed: 0                 # Seed for randomized commands

# Values left out fall back to the scenario file
overrides:
  # rho: 1.5
  # horizon: 20
  # dt: 0.08

tolerances:
  position: 0.03          # m
  force: 0.5              # N
  rotation: 0.05          # rad
  # moment: 0.05          # N*m (default: 0.5 for desk-scale scenarios, else 0.05)

output:
  directory: ~/patchplan/out
  verbose: false          # Also write per-solve iteration logs
"""

    config_path.write_text(template)
    logger.info(f"Wrote configuration template to {config_path}")
