"""
Independent feasibility check of a planned trajectory.

Every family is evaluated by direct formula on the trajectory arrays, using
exact rotations and a geometric point-in-cuboid test. Nothing here reads the
constraint matrices the planner was built from.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .geometry import SingularityError, Wrench, angular_velocity, rotation_matrix
from .limit_surface import patch_contains
from .scenario import Scenario
from .trajectory import DiscreteVariables, TrajectoryVariables


logger = logging.getLogger(__name__)

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_SHAPE = 2


@dataclass(frozen=True)
class ToleranceSet:
    """Pass thresholds per unit; count families always need zero breaches."""

    position: float = 0.03
    force: float = 0.5
    rotation: float = 0.05
    moment: float = 0.05
    bounds: float = 1e-5
    membership: float = 1e-6

    @classmethod
    def desk(cls) -> "ToleranceSet":
        """Reduced-scale preset with the looser moment threshold."""
        return cls(moment=0.5)

    def for_unit(self, unit: str) -> float:
        return {
            "m": self.position,
            "rad": self.rotation,
            "N": self.force,
            "N*m": self.moment,
            "mixed": self.bounds,
            "count": 0.0,
        }[unit]


# (family, unit) in report order.
FAMILIES: Tuple[Tuple[str, str], ...] = (
    ("dynamics_force", "N"),
    ("dynamics_moment", "N*m"),
    ("integration", "m"),
    ("orientation", "rad"),
    ("kinematics", "m"),
    ("contact_logic", "m"),
    ("contact_wrench", "N"),
    ("cardinality", "count"),
    ("discrete", "count"),
    ("patch_membership", "count"),
    ("paired_fingers", "N"),
    ("collision", "m"),
    ("bounds", "mixed"),
    ("boundary", "m"),
)


@dataclass
class FamilyResult:
    name: str
    unit: str
    violation: float
    tolerance: float
    series: np.ndarray
    worst_step: Optional[int] = None

    @property
    def passed(self) -> bool:
        return self.violation <= self.tolerance

    def to_dict(self) -> dict:
        return {
            "unit": self.unit,
            "violation": float(self.violation),
            "tolerance": float(self.tolerance),
            "passed": self.passed,
            "worst_step": self.worst_step,
            "series": [float(v) for v in self.series],
        }


@dataclass
class FeasibilityReport:
    """Per-family maximum violations and the overall verdict."""

    families: Dict[str, FamilyResult]
    tolerances: ToleranceSet = field(default_factory=ToleranceSet)

    @property
    def passed(self) -> bool:
        return all(result.passed for result in self.families.values())

    @property
    def failed_families(self) -> List[str]:
        return [name for name, result in self.families.items() if not result.passed]

    @property
    def exit_code(self) -> int:
        return EXIT_PASS if self.passed else EXIT_FAIL

    def __getitem__(self, name: str) -> FamilyResult:
        return self.families[name]

    def violation(self, name: str) -> float:
        return self.families[name].violation

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "failed": self.failed_families,
            "families": {name: result.to_dict() for name, result in self.families.items()},
        }

    def write_json(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n")
        logger.debug(f"Wrote feasibility report to {path}")
        return path

    def table(self) -> str:
        lines = [f"{'family':<18} {'violation':>12} {'tolerance':>12} {'unit':>6}  verdict"]
        for name, result in self.families.items():
            verdict = "ok" if result.passed else "FAIL"
            lines.append(f"{name:<18} {result.violation:>12.4g} {result.tolerance:>12.4g} {result.unit:>6}  {verdict}")
        lines.append(f"overall: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)


class _Series:
    """Per-step maxima of one family; count families accumulate."""

    def __init__(self, horizon: int):
        self.values = {name: np.zeros(horizon + 1) for name, _ in FAMILIES}
        self.units = dict(FAMILIES)

    def add(self, family: str, t: int, value: float):
        value = float(value)
        if self.units[family] == "count":
            self.values[family][t] += value
        elif value > self.values[family][t]:
            self.values[family][t] = value


def _excess(value, lower, upper) -> float:
    value = np.asarray(value, dtype=float)
    return float(np.max(np.maximum(0.0, np.maximum(np.asarray(lower) - value, value - np.asarray(upper)))))


@dataclass
class DynamicsProfile:
    """Per-step norms of the force and moment balance residuals."""

    force: np.ndarray
    moment: np.ndarray

    @property
    def max_force(self) -> float:
        return float(np.max(self.force)) if self.force.size else 0.0

    @property
    def max_moment(self) -> float:
        return float(np.max(self.moment)) if self.moment.size else 0.0


def dynamics_residual_profile(s: Scenario, traj: TrajectoryVariables) -> DynamicsProfile:
    """
    Force and moment balance residual norms for t = 0..N-1.

    Force: M (rdot_{t+1} - rdot_t)/dt - sum_i lambda - M g.
    Moment: I (omega_{t+1} - omega_t)/dt + omega_t x I omega_t
            - sum_i (r_t - p_t^i) x lambda_t^i - sum_i tau_t^i.

    Raises:
        ShapeError: If the trajectory doesn't match the scenario
    """
    traj.check_shapes(s)
    robot = s.robot
    M, I, g, dt = robot.mass, robot.inertia, robot.gravity, s.dt
    N = s.horizon
    force = np.zeros(N)
    moment = np.zeros(N)
    try:
        omega = np.array([angular_velocity(traj.theta[t], traj.thetadot[t]) for t in range(N + 1)])
    except SingularityError as exc:
        logger.warning(f"Moment residual undefined: {exc}")
        omega = None
    for t in range(N):
        res = M * (traj.rdot[t + 1] - traj.rdot[t]) / dt - traj.lam[t].sum(axis=0) - M * g
        force[t] = np.linalg.norm(res)
        if omega is None:
            moment[t] = np.inf
            continue
        w = omega[t]
        lhs = I @ (omega[t + 1] - w) / dt + np.cross(w, I @ w)
        rhs = np.cross(traj.r[t] - traj.p[t], traj.lam[t]).sum(axis=0) + traj.tau[t].sum(axis=0)
        moment[t] = np.linalg.norm(lhs - rhs)
    return DynamicsProfile(force, moment)


def _paired_regions(s: Scenario, c: int, c2: int) -> str:
    """'free' for different holds, 'paired' for paired faces, 'blocked' otherwise."""
    first, second = s.regions[c], s.regions[c2]
    if first.pair == second.id:
        return "paired"
    if first.hold != second.hold:
        return "free"
    return "blocked"


def _check_motion(s: Scenario, traj: TrajectoryVariables, out: _Series):
    robot = s.robot
    N, dt = s.horizon, s.dt
    profile = dynamics_residual_profile(s, traj)
    for t in range(N):
        out.add("dynamics_force", t, profile.force[t])
        out.add("dynamics_moment", t, profile.moment[t])
        out.add("integration", t, np.max(np.abs(traj.r[t + 1] - traj.r[t] - dt * traj.rdot[t])))
        out.add("orientation", t, np.max(np.abs(traj.theta[t + 1] - traj.theta[t] - dt * traj.thetadot[t])))
    for t in range(N + 1):
        rot = rotation_matrix(traj.theta[t])
        for i in robot.active_fingers:
            local = rot.T @ (traj.p[t, i] - traj.r[t])
            a, b = robot.finger_offsets[i], robot.finger_ranges[i]
            out.add("kinematics", t, _excess(local, a - b, a + b))
            c, span = robot.finger_orientations[i], robot.orientation_ranges[i]
            out.add("orientation", t, _excess(traj.q[t, i] - traj.theta[t], c - span, c + span))
        for l in range(robot.n_limbs):
            first, second = robot.limb_fingers(l)
            out.add("kinematics", t, np.max(np.abs(traj.p[t, second] - traj.p[t, first] - traj.d[t, l])))
            out.add("orientation", t, np.max(np.abs(traj.q[t, second] - traj.q[t, first])))


def _check_contacts(s: Scenario, traj: TrajectoryVariables, disc: DiscreteVariables, out: _Series,
                    tol: ToleranceSet):
    robot = s.robot
    N = s.horizon
    for t in range(N):
        for i in range(robot.n_fingers):
            alpha = disc.alpha[t, i]
            if robot.is_absent(i):
                out.add("cardinality", t, int(np.sum(alpha)))
                out.add("contact_wrench", t, np.max(np.abs(traj.lam[t, i])))
                out.add("contact_wrench", t, np.max(np.abs(traj.tau[t, i])))
                continue
            if np.sum(alpha) > 1:
                out.add("cardinality", t, int(np.sum(alpha)) - 1)
            world_f = np.zeros(3)
            world_m = np.zeros(3)
            for c, region in enumerate(s.regions):
                f, m = traj.f[t, i, c], traj.m[t, i, c]
                world_f += region.rotation @ f
                world_m += region.rotation @ m
                if not alpha[c]:
                    out.add("contact_wrench", t, max(np.max(np.abs(f)), np.max(np.abs(m))))
                    continue
                out.add("contact_logic", t, np.linalg.norm(traj.p[t + 1, i] - traj.p[t, i]))
                out.add("contact_logic", t, np.linalg.norm(traj.q[t + 1, i] - traj.q[t, i]))
                local = region.to_local(traj.p[t, i])
                out.add("contact_logic", t, _excess(local[:2], -region.extent, region.extent))
                if abs(local[2]) > tol.membership:
                    out.add("patch_membership", t, 1)
                if region.yaw_tolerance < np.pi:
                    out.add("orientation", t, _excess(traj.q[t, i, 2], region.grasp_yaw - region.yaw_tolerance,
                                                      region.grasp_yaw + region.yaw_tolerance))
                out.add("discrete", t, _torsion_sign_breaches(traj, disc, t, i, c, tol.moment))
                scale = tol.membership * max(1.0, region.f_max)
                if not patch_contains(region.surface, Wrench(f, m, region.id), scale):
                    out.add("patch_membership", t, 1)
            out.add("contact_wrench", t, np.max(np.abs(traj.lam[t, i] - world_f)))
            out.add("contact_wrench", t, np.max(np.abs(traj.tau[t, i] - world_m)))
        _check_pins(s, traj, disc, out, t)
        if not robot.point_contact:
            _check_pairs(s, traj, disc, out, t)


def _torsion_sign_breaches(traj: TrajectoryVariables, disc: DiscreteVariables, t: int, i: int, c: int,
                           tol: float) -> int:
    """gamma = 1 allows only nonnegative torsion and mz-, gamma = 0 only nonpositive torsion and mz+."""
    mz = traj.m[t, i, c, 2]
    if disc.gamma[t, i, c] == 1:
        return int(mz < -tol) + int(traj.mz_minus[t, i, c] > tol)
    if disc.gamma[t, i, c] == 0:
        return int(mz > tol) + int(traj.mz_plus[t, i, c] > tol)
    return 0


def _check_discrete(disc: DiscreteVariables, out: _Series):
    """Every binary entry must be exactly 0 or 1."""
    for t in range(disc.alpha.shape[0]):
        for values in (disc.alpha[t], disc.beta[t], disc.gamma[t]):
            out.add("discrete", t, int(np.count_nonzero((values != 0) & (values != 1))))


def _check_pins(s: Scenario, traj: TrajectoryVariables, disc: DiscreteVariables, out: _Series, t: int):
    for pin in s.pins:
        i = pin.finger
        if pin.component == "contact":
            c = s.region_index(pin.region)
            out.add("cardinality", t, int(disc.alpha[t, i, c] != pin.value))
            continue
        regions = range(s.n_regions) if pin.region is None else [s.region_index(pin.region)]
        for c in regions:
            if not disc.alpha[t, i, c]:
                continue
            value = traj.m[t, i, c, 2] if pin.component == "mz" else traj.f[t, i, c, "xyz".index(pin.component[1])]
            out.add("contact_wrench", t, abs(value - pin.value))


def _check_pairs(s: Scenario, traj: TrajectoryVariables, disc: DiscreteVariables, out: _Series, t: int):
    for l in range(s.robot.n_limbs):
        first, second = s.robot.limb_fingers(l)
        for c in np.flatnonzero(disc.alpha[t, first]):
            for c2 in np.flatnonzero(disc.alpha[t, second]):
                kind = _paired_regions(s, int(c), int(c2))
                if kind == "blocked":
                    out.add("cardinality", t, 1)
                elif kind == "paired":
                    f1, f2 = traj.f[t, first, c], traj.f[t, second, c2]
                    m1, m2 = traj.m[t, first, c], traj.m[t, second, c2]
                    gap = [f1[0] - f2[0], f1[1] - f2[1], m1[2] - m2[2]]
                    out.add("paired_fingers", t, np.max(np.abs(gap)))


def _check_collision(s: Scenario, traj: TrajectoryVariables, out: _Series):
    """A finger collides when it lies strictly inside every face of a cuboid."""
    for t in range(s.horizon + 1):
        for i in s.robot.active_fingers:
            for obstacle in s.obstacles:
                local = obstacle.to_local(traj.p[t, i])
                depth = float(np.min(obstacle.half_extents - np.abs(local)))
                if depth > 0.0:
                    out.add("collision", t, depth)


def _check_bounds(s: Scenario, traj: TrajectoryVariables, out: _Series):
    robot = s.robot
    N = s.horizon
    arrays = {"r": traj.r, "theta": traj.theta, "rdot": traj.rdot, "thetadot": traj.thetadot}
    for family, values in arrays.items():
        lo, hi = s.bound(family)
        for t in range(N + 1):
            out.add("bounds", t, _excess(values[t], lo, hi))
    for family, values, steps in (("p", traj.p, N + 1), ("q", traj.q, N + 1), ("lambda", traj.lam, N),
                                  ("tau", traj.tau, N)):
        lo, hi = s.bound(family)
        for t in range(steps):
            for i in robot.active_fingers:
                out.add("bounds", t, _excess(values[t, i], lo, hi))
    for t in range(N + 1):
        for l in range(robot.n_limbs):
            lo, hi = robot.separation_lower[l], robot.separation_upper[l]
            if robot.point_contact:
                lo = hi = np.zeros(3)
            out.add("bounds", t, _excess(traj.d[t, l], lo, hi))
    for t in range(N):
        for i in robot.active_fingers:
            for c, region in enumerate(s.regions):
                f, m = traj.f[t, i, c], traj.m[t, i, c]
                out.add("bounds", t, _excess(f[2], 0.0, region.f_max))
                if robot.point_contact:
                    out.add("bounds", t, np.max(np.abs(m)))


def _check_boundary(s: Scenario, traj: TrajectoryVariables, out: _Series):
    N = s.horizon
    start = s.body_state("initial")
    goal = s.body_state("target")
    p0, q0 = s.initial_fingers()
    first = max(np.max(np.abs(traj.r[0] - start["r"])), np.max(np.abs(traj.theta[0] - start["theta"])),
                np.max(np.abs(traj.rdot[0] - start["rdot"])), np.max(np.abs(traj.thetadot[0] - start["thetadot"])))
    active = list(s.robot.active_fingers)
    first = max(first, np.max(np.abs(traj.p[0, active] - p0[active])), np.max(np.abs(traj.q[0, active] - q0[active])))
    out.add("boundary", 0, first)
    last = max(np.max(np.abs(traj.r[N] - goal["r"])), np.max(np.abs(traj.rdot[N] - goal["rdot"])),
               np.max(np.abs(traj.p[N] - traj.p[N - 1])), np.max(np.abs(traj.q[N] - traj.q[N - 1])))
    out.add("boundary", N, last)


def verify(s: Scenario, traj: TrajectoryVariables, disc: DiscreteVariables,
           tol: Optional[ToleranceSet] = None) -> FeasibilityReport:
    """
    Replay a trajectory against the planning model.

    Args:
        s: Scenario the trajectory was planned for
        traj: Continuous variables
        disc: Contact, collision and torsion-sign binaries
        tol: Pass thresholds (default ToleranceSet())

    Returns:
        FeasibilityReport with one entry per family

    Raises:
        ShapeError: If traj or disc doesn't match the scenario
    """
    tol = tol or ToleranceSet()
    traj.check_shapes(s)
    disc.check_shapes(s)
    out = _Series(s.horizon)
    _check_motion(s, traj, out)
    _check_contacts(s, traj, disc, out, tol)
    _check_discrete(disc, out)
    _check_collision(s, traj, out)
    _check_bounds(s, traj, out)
    _check_boundary(s, traj, out)
    families = {}
    for name, unit in FAMILIES:
        series = out.values[name]
        violation = float(np.sum(series)) if unit == "count" else float(np.max(series))
        worst = int(np.argmax(series)) if violation > 0.0 else None
        families[name] = FamilyResult(name, unit, violation, tol.for_unit(unit), series, worst)
    report = FeasibilityReport(families, tol)
    if report.passed:
        logger.info(f"Verifier: scenario '{s.name}' PASS")
    else:
        logger.info(f"Verifier: scenario '{s.name}' FAIL ({', '.join(report.failed_families)})")
    return report
