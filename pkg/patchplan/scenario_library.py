"""
Builders for the shipped scenarios.

Every scenario exists at full scale (complete horizon and hold count) and at
desk scale (short horizon, fewer holds or faces) so that it solves in
minutes with the bundled solvers.
"""

import logging
import math
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.transform import Rotation

from .geometry import euler_angles
from .scenario import Scenario, save_scenario, scenario_from_dict


logger = logging.getLogger(__name__)

SCALES = ("full", "desk")

MASS = 6.0
INERTIA = [[0.08, 0.0, 0.0], [0.0, 0.1, 0.0], [0.0, 0.0, 0.14]]
WALK_HEIGHT = 0.25
CLIMB_HEIGHT = 0.15
HOLD_HALF = 0.03
HOLD_DEPTH = 0.04
CLIMB_F_MAX = 100.0
SPINE_CAP = 4.0
WALL_TILT = math.pi / 4
CORNERS = ((1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0))


def _euler(rot: Rotation) -> List[float]:
    return [float(v) for v in euler_angles(rot.as_matrix())]


def _box(lower, upper) -> dict:
    return {"lower": list(lower), "upper": list(upper)}


def _bounds(reach: float, tilt: float, velocity: float, force: float, moment: float) -> dict:
    return {
        "r": _box([-reach] * 3, [reach] * 3),
        "theta": _box([-0.6, -tilt - 0.6, -0.6], [0.6, -tilt + 0.6, 0.6]),
        "rdot": _box([-velocity] * 3, [velocity] * 3),
        "thetadot": _box([-velocity] * 3, [velocity] * 3),
        "p": _box([-reach] * 3, [reach] * 3),
        "q": _box([-2 * math.pi] * 3, [2 * math.pi] * 3),
        "lambda": _box([-force] * 3, [force] * 3),
        "tau": _box([-moment] * 3, [moment] * 3),
    }


def _weights(alpha_switch: float = 0.01) -> dict:
    return {
        "Q": {"blocks": {"r": 10.0, "theta": 10.0, "rdot": 1.0, "thetadot": 1.0}},
        "R": {"blocks": {"lambda": 1e-3, "tau": 1e-2}},
        "S": {"blocks": {"alpha": alpha_switch}},
    }


def _walking_robot() -> dict:
    fingers = []
    for sx, sy in CORNERS:
        finger = {
            "offset": [0.25 * sx, 0.2 * sy, -WALK_HEIGHT],
            "range": [0.12, 0.1, 0.1],
            "orientation": [0.0, 0.0, 0.0],
            "orientation_range": [math.pi, math.pi, math.pi],
        }
        fingers += [finger, dict(finger)]
    grippers = [{"separation_lower": [0.0] * 3, "separation_upper": [0.0] * 3} for _ in CORNERS]
    return {"mass": MASS, "inertia": INERTIA, "n_limbs": 4, "point_contact": True,
            "fingers": fingers, "grippers": grippers}


def _climbing_robot(pinch: float = HOLD_HALF) -> dict:
    """Fingers 2l, 2l+1 sit either side of a hold under corner l at the nominal posture."""
    fingers = []
    for sx, sy in CORNERS:
        for side in (-1.0, 1.0):
            fingers.append({
                "offset": [0.2 * sx, 0.2 * sy + side * pinch, HOLD_DEPTH / 2 - CLIMB_HEIGHT],
                "range": [0.12, 0.12, 0.1],
                "orientation": [0.0, 0.0, 0.0],
                "orientation_range": [math.pi, math.pi, math.pi],
            })
    grippers = [{"separation_lower": [-0.15] * 3, "separation_upper": [0.15] * 3} for _ in CORNERS]
    return {"mass": MASS, "inertia": INERTIA, "n_limbs": 4, "fingers": fingers, "grippers": grippers}


# Hold faces: outward normal in the hold frame and the rotation taking z onto it.
HOLD_FACES = {
    "front": ([0.0, 0.0, 1.0], Rotation.identity()),
    "px": ([1.0, 0.0, 0.0], Rotation.from_euler("y", math.pi / 2)),
    "nx": ([-1.0, 0.0, 0.0], Rotation.from_euler("y", -math.pi / 2)),
    "py": ([0.0, 1.0, 0.0], Rotation.from_euler("x", -math.pi / 2)),
    "ny": ([0.0, -1.0, 0.0], Rotation.from_euler("x", math.pi / 2)),
}
FACE_PAIRS = {"px": "nx", "nx": "px", "py": "ny", "ny": "py"}


def _hold(name: str, center_wall, wall: Rotation, origin, faces: Sequence[str], mu: Dict[str, float],
          yaw: float = 0.0, patch_radius: float = 0.02, spine: Optional[dict] = None) -> Tuple[List[dict], dict]:
    """
    Regions and collision cuboid of one hold.

    center_wall is the hold's base center in wall coordinates; the hold
    frame is the wall frame turned by yaw about the wall normal.
    """
    frame = wall * Rotation.from_euler("z", yaw)
    base = np.asarray(origin, dtype=float) + wall.apply(center_wall)
    center = base + frame.apply([0.0, 0.0, HOLD_DEPTH / 2])
    regions = []
    for face in faces:
        normal, turn = HOLD_FACES[face]
        half = np.array([HOLD_HALF, HOLD_HALF, HOLD_DEPTH / 2])
        position = center + frame.apply(np.asarray(normal) * half)
        if face == "front":
            extent = [HOLD_HALF, HOLD_HALF]
        elif face in ("px", "nx"):
            extent = [HOLD_DEPTH / 2, HOLD_HALF]
        else:
            extent = [HOLD_HALF, HOLD_DEPTH / 2]
        region = {
            "id": f"{name}-{face}",
            "hold": name,
            "position": [float(v) for v in position],
            "orientation": _euler(frame * turn),
            "extent": extent,
            "mu": mu.get(face, mu.get("default", 0.6)),
            "patch_radius": patch_radius,
            "f_max": CLIMB_F_MAX,
        }
        partner = FACE_PAIRS.get(face)
        if partner in faces:
            region["pair"] = f"{name}-{partner}"
        if spine is not None:
            region["spine"] = spine
        regions.append(region)
    obstacle = {
        "id": name,
        "position": [float(v) for v in center],
        "orientation": _euler(frame),
        "half_extents": [HOLD_HALF, HOLD_HALF, HOLD_DEPTH / 2],
    }
    return regions, obstacle


def _document(name: str, robot: dict, regions: List[dict], horizon: int, dt: float, initial: dict, target: dict,
              rho: float, bounds: dict, obstacles: Sequence[dict] = (), pins: Sequence[dict] = (),
              linearize_at=(0.0, 0.0, 0.0), description: str = "", iterations: int = 10) -> dict:
    return {
        "schema_version": 1,
        "name": name,
        "description": description,
        "robot": robot,
        "regions": list(regions),
        "obstacles": list(obstacles),
        "horizon": horizon,
        "dt": dt,
        "initial": initial,
        "target": target,
        "weights": _weights(),
        "bounds": bounds,
        "admm": {"rho": rho, "iterations": iterations},
        "linearize_at": list(linearize_at),
        "pins": list(pins),
    }


def _walking_flat(scale: str, start=None, goal=None, **_) -> dict:
    start = [0.0, 0.0, WALK_HEIGHT] if start is None else [float(v) for v in start]
    goal = [0.3, 0.0, WALK_HEIGHT] if goal is None else [float(v) for v in goal]
    ground = {
        "id": "ground",
        "position": [0.5, 0.0, 0.0],
        "extent": [3.0, 3.0],
        "mu": 0.6,
        "patch_radius": 0.0,
        "f_max": 60.0,
    }
    bounds = _bounds(3.0, 0.0, 1.0, 80.0, 5.0)
    bounds["r"] = _box([-3.0, -3.0, 0.1], [3.0, 3.0, 1.0])
    bounds["p"] = _box([-3.0, -3.0, 0.0], [3.0, 3.0, 1.0])
    return _document(
        "walking-flat", _walking_robot(), [ground], 40 if scale == "full" else 20, 0.08,
        {"r": start}, {"r": goal}, 1.5, bounds,
        description="Point-contact trot on flat ground",
    )


def _wall() -> Rotation:
    return Rotation.from_euler("y", -WALL_TILT)


def _climbing_start(wall: Rotation, advance: float) -> Tuple[dict, dict, List[float]]:
    theta = _euler(wall)
    start = wall.apply([0.0, 0.0, CLIMB_HEIGHT])
    goal = wall.apply([advance, 0.0, CLIMB_HEIGHT])
    return {"r": [float(v) for v in start], "theta": theta}, {"r": [float(v) for v in goal], "theta": theta}, theta


def _four_holds(scale: str, spine: Optional[dict] = None, faces: Optional[Sequence[str]] = None,
                obstacles: bool = True) -> Tuple[List[dict], List[dict]]:
    wall = _wall()
    if faces is None:
        faces = ("front", "px", "nx", "py", "ny") if scale == "full" else ("front", "py", "ny")
    regions, cuboids = [], []
    for l, (sx, sy) in enumerate(CORNERS):
        hold_regions, cuboid = _hold(f"hold{l}", [0.2 * sx, 0.2 * sy, 0.0], wall, [0.0, 0.0, 0.0], faces,
                                     {"default": 2.2}, spine=spine)
        regions += hold_regions
        cuboids.append(cuboid)
    return regions, (cuboids if obstacles and scale == "full" else [])


def _climbing_4_holds(scale: str, advance: float = 0.06, **_) -> dict:
    regions, cuboids = _four_holds(scale)
    initial, target, theta = _climbing_start(_wall(), advance)
    return _document(
        "climbing-4-holds", _climbing_robot(), regions, 20 if scale == "full" else 4, 2.0,
        initial, target, 10.0, _bounds(2.0, WALL_TILT, 0.5, 150.0, 10.0), obstacles=cuboids,
        linearize_at=theta, description="Body shift on a 45 degree wall with four five-faced holds",
    )


def _climbing_obstacles(scale: str, **_) -> dict:
    wall = _wall()
    rows = (-0.2, 0.0, 0.2, 0.4) if scale == "full" else (-0.2, 0.2)
    columns = (-0.3, -0.2, 0.2, 0.3) if scale == "full" else (-0.2, 0.2)
    regions = []
    n = 0
    for x in rows:
        for y in columns:
            hold_regions, _ = _hold(f"hold{n}", [x, y, 0.0], wall, [0.0, 0.0, 0.0], ("front",), {"default": 2.2})
            regions += hold_regions
            n += 1
    blocks = [([0.1, 0.2, 0.0], [0.03, 0.05, 0.08]), ([0.1, -0.2, 0.0], [0.03, 0.05, 0.08]),
              ([0.3, 0.0, 0.0], [0.03, 0.05, 0.08])]
    if scale == "desk":
        blocks = blocks[:1]
    obstacles = []
    for v, (center, half) in enumerate(blocks):
        position = wall.apply(np.asarray(center) + [0.0, 0.0, half[2]])
        obstacles.append({"id": f"block{v}", "position": [float(p) for p in position],
                          "orientation": _euler(wall), "half_extents": half})
    initial, target, theta = _climbing_start(wall, 0.2 if scale == "full" else 0.1)
    initial["p"] = _front_start_fingers(wall, regions)
    return _document(
        "climbing-obstacles", _climbing_robot(pinch=0.0), regions, 120 if scale == "full" else 4, 2.0,
        initial, target, 15.0, _bounds(2.0, WALL_TILT, 0.5, 150.0, 10.0), obstacles=obstacles,
        linearize_at=theta, description="Climb across a hold grid around protruding blocks",
    )


def _front_start_fingers(wall: Rotation, regions: List[dict]) -> List[List[float]]:
    """Both fingers of limb l on the front face nearest to its corner."""
    fingers = []
    fronts = [np.asarray(r["position"]) for r in regions]
    for sx, sy in CORNERS:
        nominal = wall.apply([0.2 * sx, 0.2 * sy, HOLD_DEPTH])
        best = min(fronts, key=lambda p: float(np.linalg.norm(p - nominal)))
        fingers += [[float(v) for v in best], [float(v) for v in best]]
    return fingers


def _slippery_rotated_holds(scale: str, **_) -> dict:
    floor = Rotation.identity()
    spots = [(0.25 * sx, 0.2 * sy) for sx, sy in CORNERS]
    if scale == "full":
        spots += [(x + 0.3, y) for x, y in spots]
    regions = []
    faces = ("px", "nx", "py", "ny")
    for n, (x, y) in enumerate(spots):
        yaw = math.radians(30.0 * ((n % 3) - 1))
        hold_regions, _ = _hold(f"hold{n}", [x, y, 0.0], floor, [0.0, 0.0, 0.0], faces,
                                {"px": 2.2, "nx": 2.2, "py": 0.0, "ny": 0.0}, yaw=yaw)
        regions += hold_regions
    robot = _climbing_robot(pinch=0.0)
    for finger in robot["fingers"]:
        finger["offset"][0] *= 1.25
        finger["offset"][2] = HOLD_DEPTH / 2 - WALK_HEIGHT
    by_id = {region["id"]: region["position"] for region in regions}
    fingers = []
    for l in range(len(CORNERS)):
        fingers += [list(by_id[f"hold{l}-nx"]), list(by_id[f"hold{l}-px"])]
    start = {"r": [0.0, 0.0, WALK_HEIGHT], "p": fingers}
    goal = {"r": [0.3 if scale == "full" else 0.05, 0.0, WALK_HEIGHT]}
    bounds = _bounds(2.0, 0.0, 0.5, 150.0, 10.0)
    return _document(
        "slippery-rotated-holds", robot, regions, 10 if scale == "full" else 3, 2.0, start, goal, 15.0,
        bounds, description="Yaw-rotated holds whose side faces are frictionless",
    )


def _zero_normal_spine(scale: str, finger: int = 0, **_) -> dict:
    spine = {"f_max": [SPINE_CAP, SPINE_CAP], "tau_max": 0.2}
    regions, cuboids = _four_holds(scale, spine=spine)
    initial, target, theta = _climbing_start(_wall(), 0.06)
    return _document(
        "zero-normal-spine", _climbing_robot(), regions, 20 if scale == "full" else 4, 2.0,
        initial, target, 10.0, _bounds(2.0, WALL_TILT, 0.5, 150.0, 10.0), obstacles=cuboids,
        pins=[{"finger": finger, "component": "fz", "value": 0.0}], linearize_at=theta,
        description="Micro-spine grasp with one finger's normal force pinned to zero",
    )


def _patch_force_study(scale: str, fx: float = 9.0, mz: float = 0.6, **_) -> dict:
    regions, _ = _four_holds(scale, faces=("front", "py", "ny"), obstacles=False)
    initial, target, theta = _climbing_start(_wall(), 0.02)
    pins = [{"finger": 0, "component": "fx", "value": fx, "region": "hold0-ny"},
            {"finger": 0, "component": "mz", "value": mz, "region": "hold0-ny"},
            {"finger": 0, "component": "contact", "value": 1, "region": "hold0-ny"}]
    return _document(
        "patch-force-study", _climbing_robot(), regions, 6 if scale == "full" else 3, 2.0,
        initial, target, 10.0, _bounds(2.0, WALL_TILT, 0.5, 150.0, 10.0), pins=pins, linearize_at=theta,
        description="Pinned shear and torsion on one patch to compare normal-force demand",
    )


BUILDERS: Dict[str, Callable[..., dict]] = {
    "walking-flat": _walking_flat,
    "climbing-4-holds": _climbing_4_holds,
    "climbing-obstacles": _climbing_obstacles,
    "slippery-rotated-holds": _slippery_rotated_holds,
    "zero-normal-spine": _zero_normal_spine,
    "patch-force-study": _patch_force_study,
}


def scenario_names() -> List[str]:
    return sorted(BUILDERS)


def build_scenario_dict(name: str, scale: str = "desk", **overrides) -> dict:
    """
    Document form of a shipped scenario.

    Builder options (start, goal, advance, fx, mz, finger) shape the
    geometry; horizon, dt, rho, iterations and patch_constraints override
    the finished document.

    Raises:
        ValueError: If name or scale is unknown
    """
    if name not in BUILDERS:
        raise ValueError(f"Unknown scenario: {name}. Known scenarios: {', '.join(scenario_names())}")
    if scale not in SCALES:
        raise ValueError(f"Unknown scale: {scale}. Must be 'full' or 'desk'")
    document_keys = ("horizon", "dt", "rho", "iterations", "patch_constraints", "early_stop")
    builder_options = {k: v for k, v in overrides.items() if k not in document_keys}
    data = BUILDERS[name](scale, **builder_options)
    data["name"] = f"{name}-{scale}"
    for key in ("horizon", "dt", "patch_constraints"):
        if overrides.get(key) is not None:
            data[key] = overrides[key]
    for key in ("rho", "iterations", "early_stop"):
        if overrides.get(key) is not None:
            data["admm"][key] = overrides[key]
    return data


def build_scenario(name: str, scale: str = "desk", **overrides) -> Scenario:
    """
    Build a shipped scenario.

    Args:
        name: One of scenario_names()
        scale: 'full' or 'desk'
        **overrides: Builder options and document overrides

    Returns:
        Validated Scenario

    Raises:
        ValueError: If name or scale is unknown
        ScenarioError: If an override produces an invalid scenario
    """
    scenario = scenario_from_dict(build_scenario_dict(name, scale, **overrides))
    logger.debug(f"Built scenario '{scenario.name}': N={scenario.horizon}, C={scenario.n_regions}, "
                 f"V={scenario.n_obstacles}")
    return scenario


def random_walking_pair(seed: int) -> Tuple[List[float], List[float]]:
    """
    Feasible start and goal body positions for the walking convergence study.

    The goal lies 0.15 to 0.3 m ahead with at most 0.08 m sideways offset.
    """
    rng = np.random.default_rng(seed)
    start = [float(rng.uniform(-0.05, 0.05)), float(rng.uniform(-0.05, 0.05)), WALK_HEIGHT]
    goal = [start[0] + float(rng.uniform(0.15, 0.3)), start[1] + float(rng.uniform(-0.08, 0.08)), WALK_HEIGHT]
    return start, goal


def export_scenarios(directory) -> List[Path]:
    """Write every shipped scenario at both scales as JSON."""
    directory = Path(directory)
    paths = []
    for name in scenario_names():
        for scale in SCALES:
            paths.append(save_scenario(build_scenario(name, scale), directory / f"{name}-{scale}.json"))
    logger.info(f"Exported {len(paths)} scenarios to {directory}")
    return paths
