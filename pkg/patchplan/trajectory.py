"""Trajectory containers and their CSV exchange format."""

import csv
import logging
from dataclasses import dataclass, fields
from pathlib import Path
from typing import List, Optional

import numpy as np

from .geometry import Wrench
from .limit_surface import split_torsion
from .scenario import FACES_PER_OBSTACLE, Scenario


logger = logging.getLogger(__name__)

AXES = ("x", "y", "z")


class ShapeError(ValueError):
    """Array or file shapes disagree with the scenario."""


@dataclass(eq=False)
class TrajectoryVariables:
    """
    Continuous decision variables over the horizon.

    States are indexed t = 0..N, controls and contact wrenches t = 0..N-1.
    Contact wrenches f, m are in the region frame; lam, tau in the world frame.
    mz_plus, mz_minus and spine hold the torsion split and the spine part of
    each contact wrench.
    """

    r: np.ndarray
    theta: np.ndarray
    rdot: np.ndarray
    thetadot: np.ndarray
    p: np.ndarray
    q: np.ndarray
    d: np.ndarray
    lam: np.ndarray
    tau: np.ndarray
    f: np.ndarray
    m: np.ndarray
    mz_plus: np.ndarray
    mz_minus: np.ndarray
    spine: np.ndarray

    @classmethod
    def zeros(cls, horizon: int, n_fingers: int, n_limbs: int, n_regions: int) -> "TrajectoryVariables":
        N, n_f, C = horizon, n_fingers, n_regions
        return cls(
            r=np.zeros((N + 1, 3)),
            theta=np.zeros((N + 1, 3)),
            rdot=np.zeros((N + 1, 3)),
            thetadot=np.zeros((N + 1, 3)),
            p=np.zeros((N + 1, n_f, 3)),
            q=np.zeros((N + 1, n_f, 3)),
            d=np.zeros((N + 1, n_limbs, 3)),
            lam=np.zeros((N, n_f, 3)),
            tau=np.zeros((N, n_f, 3)),
            f=np.zeros((N, n_f, C, 3)),
            m=np.zeros((N, n_f, C, 3)),
            mz_plus=np.zeros((N, n_f, C)),
            mz_minus=np.zeros((N, n_f, C)),
            spine=np.zeros((N, n_f, C, 3)),
        )

    @classmethod
    def for_scenario(cls, scenario: Scenario) -> "TrajectoryVariables":
        return cls.zeros(scenario.horizon, scenario.robot.n_fingers, scenario.robot.n_limbs, scenario.n_regions)

    @property
    def horizon(self) -> int:
        return self.lam.shape[0]

    def expected_shapes(self, N: int, n_f: int, n_l: int, C: int) -> dict:
        return {
            "r": (N + 1, 3), "theta": (N + 1, 3), "rdot": (N + 1, 3), "thetadot": (N + 1, 3),
            "p": (N + 1, n_f, 3), "q": (N + 1, n_f, 3), "d": (N + 1, n_l, 3),
            "lam": (N, n_f, 3), "tau": (N, n_f, 3),
            "f": (N, n_f, C, 3), "m": (N, n_f, C, 3),
            "mz_plus": (N, n_f, C), "mz_minus": (N, n_f, C), "spine": (N, n_f, C, 3),
        }

    def check_shapes(self, scenario: Scenario):
        """Raise ShapeError unless every array matches the scenario."""
        expected = self.expected_shapes(scenario.horizon, scenario.robot.n_fingers,
                                        scenario.robot.n_limbs, scenario.n_regions)
        for name, shape in expected.items():
            actual = np.shape(getattr(self, name))
            if actual != shape:
                raise ShapeError(f"trajectory field '{name}' has shape {actual}, expected {shape}")

    def local_wrench(self, t: int, finger: int, region: int, frame: str = "region") -> Wrench:
        return Wrench(self.f[t, finger, region], self.m[t, finger, region], frame)

    def copy(self) -> "TrajectoryVariables":
        return TrajectoryVariables(**{f.name: np.array(getattr(self, f.name), dtype=float) for f in fields(self)})


@dataclass(eq=False)
class DiscreteVariables:
    """
    Binary decision variables over t = 0..N-1.

    alpha[t, i, c]: finger i in contact with region c.
    beta[t, i, v, h]: finger i exempt from the outer halfspace of face h of obstacle v.
    gamma[t, i, c]: sign selector of the torsion split.

    Values are strictly binary. The one-contact-per-finger rule is a model
    property checked by the verifier, not enforced here.
    """

    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        for f in fields(self):
            values = np.asarray(getattr(self, f.name))
            if values.size and not np.all((values == 0) | (values == 1)):
                raise ValueError(f"{f.name} must be strictly binary")
            setattr(self, f.name, values.astype(np.int8))

    @classmethod
    def zeros(cls, horizon: int, n_fingers: int, n_regions: int, n_obstacles: int) -> "DiscreteVariables":
        return cls(
            alpha=np.zeros((horizon, n_fingers, n_regions), dtype=np.int8),
            beta=np.zeros((horizon, n_fingers, n_obstacles, FACES_PER_OBSTACLE), dtype=np.int8),
            gamma=np.ones((horizon, n_fingers, n_regions), dtype=np.int8),
        )

    @classmethod
    def for_scenario(cls, scenario: Scenario) -> "DiscreteVariables":
        return cls.zeros(scenario.horizon, scenario.robot.n_fingers, scenario.n_regions, scenario.n_obstacles)

    def check_shapes(self, scenario: Scenario):
        N, n_f = scenario.horizon, scenario.robot.n_fingers
        expected = {
            "alpha": (N, n_f, scenario.n_regions),
            "beta": (N, n_f, scenario.n_obstacles, FACES_PER_OBSTACLE),
            "gamma": (N, n_f, scenario.n_regions),
        }
        for name, shape in expected.items():
            actual = np.shape(getattr(self, name))
            if actual != shape:
                raise ShapeError(f"discrete field '{name}' has shape {actual}, expected {shape}")

    def contact_region(self, t: int, finger: int) -> Optional[int]:
        """First region finger touches at t, or None."""
        hits = np.flatnonzero(self.alpha[t, finger])
        return int(hits[0]) if hits.size else None

    def in_contact(self, t: int, finger: int) -> bool:
        return bool(np.any(self.alpha[t, finger]))

    def copy(self) -> "DiscreteVariables":
        return DiscreteVariables(self.alpha.copy(), self.beta.copy(), self.gamma.copy())


def _fmt(value: float) -> str:
    return repr(float(value))


def trajectory_header(n_fingers: int) -> List[str]:
    header = ["t"]
    for name in ("r", "theta", "rdot", "thetadot"):
        header += [f"{name}_{a}" for a in AXES]
    for i in range(n_fingers):
        for name in ("p", "q", "lambda", "tau"):
            header += [f"{name}{i}_{a}" for a in AXES]
    return header


CONTACTS_HEADER = ["t", "finger", "region", "alpha", "fx", "fy", "fz", "mx", "my", "mz"]


def export_trajectory_csv(traj: TrajectoryVariables, path) -> Path:
    """Write one row per time step; lambda and tau cells are empty at t = N."""
    path = Path(path)
    N, n_f = traj.horizon, traj.p.shape[1]
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(trajectory_header(n_f))
        for t in range(N + 1):
            row = [str(t)]
            for arr in (traj.r, traj.theta, traj.rdot, traj.thetadot):
                row += [_fmt(v) for v in arr[t]]
            for i in range(n_f):
                row += [_fmt(v) for v in traj.p[t, i]]
                row += [_fmt(v) for v in traj.q[t, i]]
                if t < N:
                    row += [_fmt(v) for v in traj.lam[t, i]]
                    row += [_fmt(v) for v in traj.tau[t, i]]
                else:
                    row += [""] * 6
            writer.writerow(row)
    logger.debug(f"Wrote trajectory CSV {path}")
    return path


def export_contacts_csv(traj: TrajectoryVariables, disc: DiscreteVariables, scenario: Scenario, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CONTACTS_HEADER)
        for t in range(scenario.horizon):
            for i in range(scenario.robot.n_fingers):
                for c, region in enumerate(scenario.regions):
                    writer.writerow(
                        [str(t), str(i), region.id, str(int(disc.alpha[t, i, c]))]
                        + [_fmt(v) for v in traj.f[t, i, c]]
                        + [_fmt(v) for v in traj.m[t, i, c]]
                    )
    logger.debug(f"Wrote contacts CSV {path}")
    return path


def _read_rows(path: Path, header: List[str]) -> List[List[str]]:
    if not path.exists():
        raise FileNotFoundError(f"CSV file not found: {path}")
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows or rows[0] != header:
        raise ShapeError(f"{path}: unexpected header")
    for n, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ShapeError(f"{path}:{n}: expected {len(header)} columns, got {len(row)}")
    return rows[1:]


def _parse(value: str, where: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ShapeError(f"{where}: not a number: {value!r}") from None


def import_trajectory_csv(path, scenario: Scenario) -> TrajectoryVariables:
    """
    Read a trajectory CSV written by export_trajectory_csv.

    The gripper separations d are recomputed from the finger positions.

    Raises:
        FileNotFoundError: If the file doesn't exist
        ShapeError: If rows, columns or cells don't match the scenario
    """
    path = Path(path)
    n_f, N = scenario.robot.n_fingers, scenario.horizon
    rows = _read_rows(path, trajectory_header(n_f))
    if len(rows) != N + 1:
        raise ShapeError(f"{path}: expected {N + 1} rows, got {len(rows)}")
    traj = TrajectoryVariables.for_scenario(scenario)
    for t, row in enumerate(rows):
        where = f"{path}:{t + 2}"
        if _parse(row[0], where) != t:
            raise ShapeError(f"{where}: expected t={t}")
        values = row[1:]
        for k, arr in enumerate((traj.r, traj.theta, traj.rdot, traj.thetadot)):
            arr[t] = [_parse(v, where) for v in values[3 * k:3 * k + 3]]
        base = 12
        for i in range(n_f):
            cells = values[base + 12 * i: base + 12 * (i + 1)]
            traj.p[t, i] = [_parse(v, where) for v in cells[0:3]]
            traj.q[t, i] = [_parse(v, where) for v in cells[3:6]]
            if t < N:
                traj.lam[t, i] = [_parse(v, where) for v in cells[6:9]]
                traj.tau[t, i] = [_parse(v, where) for v in cells[9:12]]
    for l in range(scenario.robot.n_limbs):
        traj.d[:, l] = traj.p[:, 2 * l + 1] - traj.p[:, 2 * l]
    return traj


def import_contacts_csv(path, scenario: Scenario, traj: TrajectoryVariables) -> DiscreteVariables:
    """
    Read a contacts CSV into traj.f, traj.m and a new DiscreteVariables.

    The torsion split and gamma follow from m; beta is left at zero.
    """
    path = Path(path)
    rows = _read_rows(path, CONTACTS_HEADER)
    N, n_f, C = scenario.horizon, scenario.robot.n_fingers, scenario.n_regions
    if len(rows) != N * n_f * C:
        raise ShapeError(f"{path}: expected {N * n_f * C} rows, got {len(rows)}")
    region_index = {region.id: c for c, region in enumerate(scenario.regions)}
    disc = DiscreteVariables.for_scenario(scenario)
    for n, row in enumerate(rows, start=2):
        where = f"{path}:{n}"
        t, i = int(_parse(row[0], where)), int(_parse(row[1], where))
        if not (0 <= t < N and 0 <= i < n_f) or row[2] not in region_index:
            raise ShapeError(f"{where}: index out of range")
        c = region_index[row[2]]
        alpha = _parse(row[3], where)
        if alpha not in (0.0, 1.0):
            raise ShapeError(f"{where}: alpha must be 0 or 1")
        disc.alpha[t, i, c] = int(alpha)
        traj.f[t, i, c] = [_parse(v, where) for v in row[4:7]]
        traj.m[t, i, c] = [_parse(v, where) for v in row[7:10]]
        plus, minus, gamma = split_torsion(traj.m[t, i, c, 2])
        traj.mz_plus[t, i, c] = plus
        traj.mz_minus[t, i, c] = minus
        disc.gamma[t, i, c] = gamma
    return disc
