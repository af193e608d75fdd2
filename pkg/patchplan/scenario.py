"""
Scenario schema for the planner.

A scenario is a single JSON document holding the robot constants, the
graspable regions, the obstacles, the horizon, the cost weights, the
variable bounds and the solver settings. Loading validates every field and
reports problems with the dotted path of the offending field.
"""

import copy
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace
from functools import cached_property
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .geometry import RigidTransform, rotation_matrix
from .limit_surface import FrictionLimitSurface, PatchLimitSurface, SpineLimitSurface


logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
TORSION_RATIO = 0.67
FACES_PER_OBSTACLE = 6
DEFAULT_BIG_M = 1e4

BODY_FAMILIES = ("r", "theta", "rdot", "thetadot")
STATE_FAMILIES = BODY_FAMILIES + ("p", "q", "d")
CONTROL_FAMILIES = ("lambda", "tau")
DISCRETE_FAMILIES = ("alpha", "beta", "gamma")
BOUNDED_FAMILIES = ("r", "theta", "rdot", "thetadot", "p", "q", "lambda", "tau")
PIN_COMPONENTS = ("fx", "fy", "fz", "mz", "contact")


class ScenarioError(ValueError):
    """Invalid scenario content, tagged with the dotted field path."""

    def __init__(self, field_path: str, message: str):
        super().__init__(f"{field_path}: {message}")
        self.field = field_path
        self.message = message


def _join(path: str, key) -> str:
    if isinstance(key, int):
        return f"{path}[{key}]"
    return f"{path}.{key}" if path else str(key)


def _nested(path: str, build):
    """Run build(), prefixing any ScenarioError field with path."""
    try:
        return build()
    except ScenarioError as exc:
        raise ScenarioError(_join(path, exc.field), exc.message) from None


def _require(data, key: str, path: str = ""):
    if not isinstance(data, dict):
        raise ScenarioError(path or "<root>", f"expected an object, got {type(data).__name__}")
    if key not in data:
        raise ScenarioError(_join(path, key), "missing required field")
    return data[key]


def _number(value, name: str, minimum: Optional[float] = None, strict: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(name, f"expected a number, got {type(value).__name__}")
    value = float(value)
    if not math.isfinite(value):
        raise ScenarioError(name, "must be finite")
    if minimum is not None:
        if strict and not value > minimum:
            raise ScenarioError(name, f"must be > {minimum:g}, got {value:g}")
        if not strict and not value >= minimum:
            raise ScenarioError(name, f"must be >= {minimum:g}, got {value:g}")
    return value


def _integer(value, name: str, minimum: int) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
        raise ScenarioError(name, f"expected an integer, got {value!r}")
    value = int(value)
    if value < minimum:
        raise ScenarioError(name, f"must be >= {minimum}, got {value}")
    return value


def _array(value, shape: Tuple[int, ...], name: str, minimum: Optional[float] = None) -> np.ndarray:
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(name, f"expected numbers ({exc})") from None
    if arr.shape != shape:
        raise ScenarioError(name, f"expected shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ScenarioError(name, "must be finite")
    if minimum is not None and np.any(arr < minimum):
        raise ScenarioError(name, f"components must be >= {minimum:g}")
    arr.setflags(write=False)
    return arr


def _list(value) -> list:
    return np.asarray(value, dtype=float).tolist()


def _plain(value):
    """Convert numpy containers to plain JSON-compatible Python values."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    return value


@dataclass(frozen=True, eq=False)
class RobotModel:
    """
    Centroidal robot: one rigid body with 2 fingers per limb.

    Finger 2l and finger 2l+1 belong to gripper l and are separated by the
    vector d^l = p^{2l+1} - p^{2l}. With point_contact set, finger 2l+1 is
    absent and follows finger 2l.
    """

    mass: float
    inertia: np.ndarray
    gravity: np.ndarray
    n_limbs: int
    finger_offsets: np.ndarray
    finger_ranges: np.ndarray
    finger_orientations: np.ndarray
    orientation_ranges: np.ndarray
    separation_lower: np.ndarray
    separation_upper: np.ndarray
    point_contact: bool = False

    def __post_init__(self):
        n_l = _integer(self.n_limbs, "n_limbs", 1)
        n_f = 2 * n_l
        object.__setattr__(self, "n_limbs", n_l)
        object.__setattr__(self, "mass", _number(self.mass, "mass", 0.0, strict=True))
        inertia = _array(self.inertia, (3, 3), "inertia")
        if np.max(np.abs(inertia - inertia.T)) > 1e-9:
            raise ScenarioError("inertia", "must be symmetric")
        if np.min(np.linalg.eigvalsh(inertia)) <= 0.0:
            raise ScenarioError("inertia", "must be positive definite")
        object.__setattr__(self, "inertia", inertia)
        object.__setattr__(self, "gravity", _array(self.gravity, (3,), "gravity"))
        object.__setattr__(self, "finger_offsets", _array(self.finger_offsets, (n_f, 3), "finger_offsets"))
        object.__setattr__(self, "finger_ranges", _array(self.finger_ranges, (n_f, 3), "finger_ranges", 0.0))
        object.__setattr__(self, "finger_orientations", _array(self.finger_orientations, (n_f, 3), "finger_orientations"))
        object.__setattr__(self, "orientation_ranges", _array(self.orientation_ranges, (n_f, 3), "orientation_ranges", 0.0))
        lower = _array(self.separation_lower, (n_l, 3), "separation_lower")
        upper = _array(self.separation_upper, (n_l, 3), "separation_upper")
        if np.any(lower > upper):
            raise ScenarioError("separation_upper", "must be >= separation_lower")
        object.__setattr__(self, "separation_lower", lower)
        object.__setattr__(self, "separation_upper", upper)
        if not isinstance(self.point_contact, bool):
            raise ScenarioError("point_contact", "expected true or false")

    @property
    def n_fingers(self) -> int:
        return 2 * self.n_limbs

    def limb_fingers(self, limb: int) -> Tuple[int, int]:
        return 2 * limb, 2 * limb + 1

    def limb_of(self, finger: int) -> int:
        return finger // 2

    def is_absent(self, finger: int) -> bool:
        """Absent fingers exist only for point-contact robots."""
        return self.point_contact and finger % 2 == 1

    @property
    def active_fingers(self) -> Tuple[int, ...]:
        return tuple(i for i in range(self.n_fingers) if not self.is_absent(i))

    @classmethod
    def from_dict(cls, data: dict) -> "RobotModel":
        n_l = _integer(_require(data, "n_limbs"), "n_limbs", 1)
        fingers = _require(data, "fingers")
        if not isinstance(fingers, list) or len(fingers) != 2 * n_l:
            raise ScenarioError("fingers", f"expected a list of {2 * n_l} fingers")
        grippers = _require(data, "grippers")
        if not isinstance(grippers, list) or len(grippers) != n_l:
            raise ScenarioError("grippers", f"expected a list of {n_l} grippers")

        def finger_field(key):
            return [_require(f, key, _join("fingers", i)) for i, f in enumerate(fingers)]

        def gripper_field(key):
            return [_require(g, key, _join("grippers", i)) for i, g in enumerate(grippers)]

        return cls(
            mass=_require(data, "mass"),
            inertia=_require(data, "inertia"),
            gravity=data.get("gravity", [0.0, 0.0, -9.81]),
            n_limbs=n_l,
            finger_offsets=finger_field("offset"),
            finger_ranges=finger_field("range"),
            finger_orientations=finger_field("orientation"),
            orientation_ranges=finger_field("orientation_range"),
            separation_lower=gripper_field("separation_lower"),
            separation_upper=gripper_field("separation_upper"),
            point_contact=data.get("point_contact", False),
        )

    def to_dict(self) -> dict:
        return {
            "mass": self.mass,
            "inertia": _list(self.inertia),
            "gravity": _list(self.gravity),
            "n_limbs": self.n_limbs,
            "point_contact": self.point_contact,
            "fingers": [
                {
                    "offset": _list(self.finger_offsets[i]),
                    "range": _list(self.finger_ranges[i]),
                    "orientation": _list(self.finger_orientations[i]),
                    "orientation_range": _list(self.orientation_ranges[i]),
                }
                for i in range(self.n_fingers)
            ],
            "grippers": [
                {
                    "separation_lower": _list(self.separation_lower[l]),
                    "separation_upper": _list(self.separation_upper[l]),
                }
                for l in range(self.n_limbs)
            ],
        }


@dataclass(frozen=True, eq=False)
class GraspRegion:
    """
    Rectangular graspable patch on a hold face.

    The frame maps region coordinates to world coordinates; its z-axis is
    the face normal. The torsion constant is derived from the patch radius.
    """

    id: str
    position: np.ndarray
    orientation: np.ndarray
    extent: np.ndarray
    mu: float
    patch_radius: float
    f_max: float
    spine_f_max: np.ndarray = field(default_factory=lambda: np.zeros(2))
    spine_tau_max: float = 0.0
    grasp_yaw: float = 0.0
    yaw_tolerance: float = math.pi
    hold: str = ""
    pair: Optional[str] = None
    torsion_constant: float = field(init=False)

    def __post_init__(self):
        if not isinstance(self.id, str) or not self.id:
            raise ScenarioError("id", "expected a non-empty string")
        object.__setattr__(self, "position", _array(self.position, (3,), "position"))
        object.__setattr__(self, "orientation", _array(self.orientation, (3,), "orientation"))
        extent = _array(self.extent, (2,), "extent")
        if np.any(extent <= 0.0):
            raise ScenarioError("extent", "half-widths must be > 0")
        object.__setattr__(self, "extent", extent)
        object.__setattr__(self, "mu", _number(self.mu, "mu", 0.0))
        object.__setattr__(self, "patch_radius", _number(self.patch_radius, "patch_radius", 0.0))
        object.__setattr__(self, "f_max", _number(self.f_max, "f_max", 0.0, strict=True))
        object.__setattr__(self, "spine_f_max", _array(self.spine_f_max, (2,), "spine_f_max", 0.0))
        object.__setattr__(self, "spine_tau_max", _number(self.spine_tau_max, "spine_tau_max", 0.0))
        object.__setattr__(self, "grasp_yaw", _number(self.grasp_yaw, "grasp_yaw"))
        object.__setattr__(self, "yaw_tolerance", _number(self.yaw_tolerance, "yaw_tolerance", 0.0))
        object.__setattr__(self, "hold", self.hold or self.id)
        object.__setattr__(self, "torsion_constant", TORSION_RATIO * self.patch_radius)

    @property
    def frame(self) -> RigidTransform:
        """Region-to-world transform."""
        return RigidTransform.from_euler(self.orientation, self.position, source=self.id, target="world")

    @cached_property
    def rotation(self) -> np.ndarray:
        rot = rotation_matrix(self.orientation)
        rot.setflags(write=False)
        return rot

    def to_local(self, p) -> np.ndarray:
        return self.rotation.T @ (np.asarray(p, dtype=float) - self.position)

    @property
    def surface(self) -> PatchLimitSurface:
        if self.patch_radius == 0.0:
            friction = FrictionLimitSurface.point(self.mu, self.f_max)
        else:
            friction = FrictionLimitSurface(self.mu, self.torsion_constant, self.f_max)
        return PatchLimitSurface(
            friction,
            SpineLimitSurface(float(self.spine_f_max[0]), float(self.spine_f_max[1]), self.spine_tau_max),
        )

    @property
    def shear_cap(self) -> np.ndarray:
        """Largest local shear the patch can carry per axis."""
        return self.mu * self.f_max + self.spine_f_max

    @property
    def torsion_cap(self) -> float:
        return self.torsion_constant * self.mu * self.f_max + self.spine_tau_max

    @classmethod
    def from_dict(cls, data: dict) -> "GraspRegion":
        spine = data.get("spine", {})
        return cls(
            id=_require(data, "id"),
            position=_require(data, "position"),
            orientation=data.get("orientation", [0.0, 0.0, 0.0]),
            extent=_require(data, "extent"),
            mu=_require(data, "mu"),
            patch_radius=_require(data, "patch_radius"),
            f_max=_require(data, "f_max"),
            spine_f_max=spine.get("f_max", [0.0, 0.0]),
            spine_tau_max=spine.get("tau_max", 0.0),
            grasp_yaw=data.get("grasp_yaw", 0.0),
            yaw_tolerance=data.get("yaw_tolerance", math.pi),
            hold=data.get("hold", ""),
            pair=data.get("pair"),
        )

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "hold": self.hold,
            "pair": self.pair,
            "position": _list(self.position),
            "orientation": _list(self.orientation),
            "extent": _list(self.extent),
            "mu": self.mu,
            "patch_radius": self.patch_radius,
            "f_max": self.f_max,
            "spine": {"f_max": _list(self.spine_f_max), "tau_max": self.spine_tau_max},
            "grasp_yaw": self.grasp_yaw,
            "yaw_tolerance": self.yaw_tolerance,
        }


@dataclass(frozen=True, eq=False)
class Obstacle:
    """Cuboid obstacle with six faces given in its own frame."""

    id: str
    position: np.ndarray
    orientation: np.ndarray
    half_extents: np.ndarray

    def __post_init__(self):
        if not isinstance(self.id, str) or not self.id:
            raise ScenarioError("id", "expected a non-empty string")
        object.__setattr__(self, "position", _array(self.position, (3,), "position"))
        object.__setattr__(self, "orientation", _array(self.orientation, (3,), "orientation"))
        half = _array(self.half_extents, (3,), "half_extents")
        if np.any(half <= 0.0):
            raise ScenarioError("half_extents", "must be > 0")
        object.__setattr__(self, "half_extents", half)

    @property
    def frame(self) -> RigidTransform:
        return RigidTransform.from_euler(self.orientation, self.position, source=self.id, target="world")

    @cached_property
    def rotation(self) -> np.ndarray:
        rot = rotation_matrix(self.orientation)
        rot.setflags(write=False)
        return rot

    @cached_property
    def faces(self) -> Tuple[Tuple[np.ndarray, float], ...]:
        """(outward unit normal, offset) per face, ordered +x, -x, +y, -y, +z, -z."""
        faces = []
        for axis in range(3):
            for sign in (1.0, -1.0):
                normal = np.zeros(3)
                normal[axis] = sign
                normal.setflags(write=False)
                faces.append((normal, float(self.half_extents[axis])))
        return tuple(faces)

    def to_local(self, p) -> np.ndarray:
        return self.rotation.T @ (np.asarray(p, dtype=float) - self.position)

    @classmethod
    def from_dict(cls, data: dict) -> "Obstacle":
        return cls(
            id=_require(data, "id"),
            position=_require(data, "position"),
            orientation=data.get("orientation", [0.0, 0.0, 0.0]),
            half_extents=_require(data, "half_extents"),
        )

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "position": _list(self.position),
            "orientation": _list(self.orientation),
            "half_extents": _list(self.half_extents),
        }


@dataclass(frozen=True)
class AdmmSettings:
    rho: float = 1.5
    iterations: int = 10
    early_stop: bool = False
    tol_position: float = 0.03
    tol_force: float = 0.5
    block_rho: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        _number(self.rho, "rho", 0.0, strict=True)
        _integer(self.iterations, "iterations", 1)
        _number(self.tol_position, "tol_position", 0.0, strict=True)
        _number(self.tol_force, "tol_force", 0.0, strict=True)
        if not isinstance(self.early_stop, bool):
            raise ScenarioError("early_stop", "expected true or false")
        if not isinstance(self.block_rho, dict):
            raise ScenarioError("block_rho", "expected an object")
        for name, value in self.block_rho.items():
            _number(value, _join("block_rho", name), 0.0, strict=True)

    def rho_for(self, block: str) -> float:
        return float(self.block_rho.get(block, self.rho))


@dataclass(frozen=True)
class SolverSettings:
    qp_tol: float = 1e-6
    qp_max_iter: int = 4000
    miqp_gap: float = 1e-6
    node_limit: int = 200
    nlp_tol: float = 1e-6
    nlp_max_iter: int = 60
    loose_iterations: int = 0
    loose_tol: float = 1e-4

    def __post_init__(self):
        for name in ("qp_tol", "nlp_tol", "loose_tol"):
            _number(getattr(self, name), name, 0.0, strict=True)
        _number(self.miqp_gap, "miqp_gap", 0.0)
        for name in ("qp_max_iter", "node_limit", "nlp_max_iter"):
            _integer(getattr(self, name), name, 1)
        _integer(self.loose_iterations, "loose_iterations", 0)

    def tolerances(self, admm_iteration: int) -> Tuple[float, float]:
        """(qp_tol, nlp_tol) for a 1-based ADMM iteration."""
        if admm_iteration <= self.loose_iterations:
            return max(self.qp_tol, self.loose_tol), max(self.nlp_tol, self.loose_tol)
        return self.qp_tol, self.nlp_tol


def _settings_from_dict(cls, data, path: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ScenarioError(path, "expected an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ScenarioError(_join(path, unknown[0]), "unknown field")
    return _nested(path, lambda: cls(**data))


@dataclass(frozen=True)
class WrenchPin:
    """
    Fix a local wrench component of a finger while it is in contact.

    component 'contact' instead fixes the finger's contact with region for
    the whole plan.
    """

    finger: int
    component: str
    value: float
    region: Optional[str] = None

    def to_dict(self) -> dict:
        data = {"finger": self.finger, "component": self.component, "value": self.value}
        if self.region is not None:
            data["region"] = self.region
        return data


def _state_sizes(n_f: int, n_l: int) -> List[Tuple[str, int]]:
    return [("r", 3), ("theta", 3), ("rdot", 3), ("thetadot", 3), ("p", 3 * n_f), ("q", 3 * n_f), ("d", 3 * n_l)]


def _control_sizes(n_f: int) -> List[Tuple[str, int]]:
    return [("lambda", 3 * n_f), ("tau", 3 * n_f)]


def _discrete_sizes(n_f: int, n_c: int, n_v: int) -> List[Tuple[str, int]]:
    return [("alpha", n_f * n_c), ("beta", n_f * n_v * FACES_PER_OBSTACLE), ("gamma", n_f * n_c)]


def _offsets(sizes: List[Tuple[str, int]]) -> Dict[str, slice]:
    offsets, start = {}, 0
    for name, size in sizes:
        offsets[name] = slice(start, start + size)
        start += size
    return offsets


def _expand_diagonal(spec, sizes, name: str, vector: bool = False) -> np.ndarray:
    """Expand a weight spec given as diag, matrix, vector or per-family blocks."""
    total = sum(size for _, size in sizes)
    if spec is None:
        return np.zeros(total) if vector else np.zeros((total, total))
    if not isinstance(spec, dict):
        raise ScenarioError(name, "expected an object")
    if "matrix" in spec and not vector:
        return np.array(_array(spec["matrix"], (total, total), _join(name, "matrix")))
    key = "vector" if vector else "diag"
    if key in spec:
        diag = np.array(_array(spec[key], (total,), _join(name, key)))
    else:
        blocks = spec.get("blocks", {})
        if not isinstance(blocks, dict):
            raise ScenarioError(_join(name, "blocks"), "expected an object")
        offsets = _offsets(sizes)
        diag = np.zeros(total)
        for family, value in blocks.items():
            if family not in offsets:
                raise ScenarioError(_join(_join(name, "blocks"), family), f"unknown family, expected one of {sorted(offsets)}")
            where = offsets[family]
            size = where.stop - where.start
            path = _join(_join(name, "blocks"), family)
            if isinstance(value, list):
                per = np.array(_array(value, (3,), path))
                if size % 3:
                    raise ScenarioError(path, "per-component weights need a 3-vector family")
                diag[where] = np.tile(per, size // 3)
            else:
                diag[where] = _number(value, path)
    return diag if vector else np.diag(diag)


def _check_psd(matrix: np.ndarray, name: str):
    if matrix.size == 0:
        return
    if np.max(np.abs(matrix - matrix.T)) > 1e-9:
        raise ScenarioError(name, "must be symmetric")
    scale = max(1.0, float(np.max(np.abs(matrix))))
    if np.min(np.linalg.eigvalsh(matrix)) < -1e-10 * scale:
        raise ScenarioError(name, "must be positive semidefinite")


@dataclass(frozen=True, eq=False)
class Scenario:
    """The single input artifact of a planning run."""

    name: str
    robot: RobotModel
    regions: Tuple[GraspRegion, ...]
    obstacles: Tuple[Obstacle, ...]
    horizon: int
    dt: float
    initial: dict
    target: dict
    weights: dict
    bounds: dict
    admm: AdmmSettings = field(default_factory=AdmmSettings)
    solver: SolverSettings = field(default_factory=SolverSettings)
    linearize_at: np.ndarray = field(default_factory=lambda: np.zeros(3))
    patch_constraints: bool = True
    pins: Tuple[WrenchPin, ...] = ()
    big_m: float = DEFAULT_BIG_M
    description: str = ""

    def __post_init__(self):
        if not isinstance(self.horizon, bool) and isinstance(self.horizon, (int, float)) and self.horizon < 2:
            raise ScenarioError("horizon", f"horizon too short (N={self.horizon}, need at least 2)")
        object.__setattr__(self, "horizon", _integer(self.horizon, "horizon", 2))
        object.__setattr__(self, "dt", _number(self.dt, "dt", 0.0, strict=True))
        object.__setattr__(self, "regions", tuple(self.regions))
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        object.__setattr__(self, "pins", tuple(self.pins))
        for key in ("initial", "target", "weights", "bounds"):
            object.__setattr__(self, key, _plain(getattr(self, key)))
        object.__setattr__(self, "linearize_at", _array(self.linearize_at, (3,), "linearize_at"))
        if not isinstance(self.patch_constraints, bool):
            raise ScenarioError("patch_constraints", "expected true or false")
        if not self.regions:
            raise ScenarioError("regions", "at least one graspable region is required")
        self._check_ids()
        self._check_states()
        self._check_bounds()
        self._check_pins()
        # Expand weights now so shape errors surface at load time.
        _nested("weights", lambda: (self.Q, self.R, self.S, self.zeta, self.xi))
        _check_psd(self.Q, "weights.Q")
        _check_psd(self.R, "weights.R")
        _check_psd(self.S, "weights.S")

    def _check_ids(self):
        ids = [r.id for r in self.regions]
        if len(set(ids)) != len(ids):
            raise ScenarioError("regions", "region ids must be unique")
        by_id = {r.id: r for r in self.regions}
        for c, region in enumerate(self.regions):
            if region.pair is None:
                continue
            partner = by_id.get(region.pair)
            if partner is None:
                raise ScenarioError(f"regions[{c}].pair", f"unknown region {region.pair!r}")
            if partner.pair != region.id:
                raise ScenarioError(f"regions[{c}].pair", f"pairing with {region.pair!r} is not mutual")
        obstacle_ids = [v.id for v in self.obstacles]
        if len(set(obstacle_ids)) != len(obstacle_ids):
            raise ScenarioError("obstacles", "obstacle ids must be unique")

    def _check_states(self):
        n_f = self.robot.n_fingers
        for key in BODY_FAMILIES:
            if key in ("r",):
                _array(_require(self.initial, key, "initial"), (3,), f"initial.{key}")
                _array(_require(self.target, key, "target"), (3,), f"target.{key}")
            else:
                _array(self.initial.get(key, [0.0] * 3), (3,), f"initial.{key}")
                _array(self.target.get(key, [0.0] * 3), (3,), f"target.{key}")
        for key in ("p", "q"):
            if key in self.initial:
                _array(self.initial[key], (n_f, 3), f"initial.{key}")

    def _check_bounds(self):
        if not isinstance(self.bounds, dict):
            raise ScenarioError("bounds", "expected an object")
        magnitude = 0.0
        for family in BOUNDED_FAMILIES:
            entry = _require(self.bounds, family, "bounds")
            lower = _array(_require(entry, "lower", f"bounds.{family}"), (3,), f"bounds.{family}.lower")
            upper = _array(_require(entry, "upper", f"bounds.{family}"), (3,), f"bounds.{family}.upper")
            if np.any(lower > upper):
                raise ScenarioError(f"bounds.{family}", "lower must not exceed upper")
            magnitude = max(magnitude, float(np.max(np.abs(lower))), float(np.max(np.abs(upper))))
        for region in self.regions:
            magnitude = max(magnitude, region.f_max, float(np.max(region.shear_cap)))
        big_m = _number(self.big_m, "big_m", 0.0, strict=True)
        if big_m <= magnitude:
            raise ScenarioError("big_m", f"must exceed every bound magnitude it relaxes ({magnitude:g})")

    def _check_pins(self):
        region_ids = {r.id for r in self.regions}
        for j, pin in enumerate(self.pins):
            path = f"pins[{j}]"
            _integer(pin.finger, f"{path}.finger", 0)
            if pin.finger >= self.robot.n_fingers:
                raise ScenarioError(f"{path}.finger", f"no finger {pin.finger}")
            if pin.component not in PIN_COMPONENTS:
                raise ScenarioError(f"{path}.component", f"expected one of {PIN_COMPONENTS}")
            _number(pin.value, f"{path}.value")
            if pin.region is not None and pin.region not in region_ids:
                raise ScenarioError(f"{path}.region", f"unknown region {pin.region!r}")
            if pin.component == "contact" and (pin.region is None or pin.value not in (0, 1)):
                raise ScenarioError(path, "contact pins need a region and value 0 or 1")

    def __eq__(self, other) -> bool:
        if not isinstance(other, Scenario):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    __hash__ = None

    @property
    def n_regions(self) -> int:
        return len(self.regions)

    @property
    def n_obstacles(self) -> int:
        return len(self.obstacles)

    def region_index(self, region_id: str) -> int:
        for c, region in enumerate(self.regions):
            if region.id == region_id:
                return c
        raise KeyError(region_id)

    @property
    def state_offsets(self) -> Dict[str, slice]:
        """Slices of each family in the full state vector."""
        return _offsets(_state_sizes(self.robot.n_fingers, self.robot.n_limbs))

    @property
    def control_offsets(self) -> Dict[str, slice]:
        return _offsets(_control_sizes(self.robot.n_fingers))

    @property
    def discrete_offsets(self) -> Dict[str, slice]:
        return _offsets(_discrete_sizes(self.robot.n_fingers, self.n_regions, self.n_obstacles))

    @property
    def n_x(self) -> int:
        return 12 + 6 * self.robot.n_fingers + 3 * self.robot.n_limbs

    @property
    def n_u(self) -> int:
        return 6 * self.robot.n_fingers

    @property
    def n_z(self) -> int:
        n_f = self.robot.n_fingers
        return 2 * n_f * self.n_regions + n_f * self.n_obstacles * FACES_PER_OBSTACLE

    @cached_property
    def Q(self) -> np.ndarray:
        return _expand_diagonal(self.weights.get("Q"), _state_sizes(self.robot.n_fingers, self.robot.n_limbs), "Q")

    @cached_property
    def R(self) -> np.ndarray:
        return _expand_diagonal(self.weights.get("R"), _control_sizes(self.robot.n_fingers), "R")

    @cached_property
    def S(self) -> np.ndarray:
        sizes = _discrete_sizes(self.robot.n_fingers, self.n_regions, self.n_obstacles)
        return _expand_diagonal(self.weights.get("S"), sizes, "S")

    @cached_property
    def zeta(self) -> np.ndarray:
        sizes = _state_sizes(self.robot.n_fingers, self.robot.n_limbs)
        return _expand_diagonal(self.weights.get("zeta"), sizes, "zeta", vector=True)

    @cached_property
    def xi(self) -> np.ndarray:
        value = self.weights.get("xi")
        if value is None:
            return np.zeros((self.robot.n_limbs, 3))
        return np.array(_array(value, (self.robot.n_limbs, 3), "xi"))

    def bound(self, family: str) -> Tuple[np.ndarray, np.ndarray]:
        entry = self.bounds[family]
        return np.array(entry["lower"], dtype=float), np.array(entry["upper"], dtype=float)

    def body_state(self, which: str) -> Dict[str, np.ndarray]:
        """Body part of the initial or target state."""
        source = self.initial if which == "initial" else self.target
        return {key: np.array(source.get(key, [0.0] * 3), dtype=float) for key in BODY_FAMILIES}

    def nominal_fingers(self, r, theta) -> Tuple[np.ndarray, np.ndarray]:
        """Finger positions and orientations at the nominal posture of a body pose."""
        robot = self.robot
        rot = rotation_matrix(theta)
        p = np.asarray(r, dtype=float) + robot.finger_offsets @ rot.T
        q = np.asarray(theta, dtype=float) + robot.finger_orientations
        for i in range(robot.n_fingers):
            if robot.is_absent(i):
                p[i] = p[i - 1]
                q[i] = q[i - 1]
        return p, q

    def initial_fingers(self) -> Tuple[np.ndarray, np.ndarray]:
        body = self.body_state("initial")
        p, q = self.nominal_fingers(body["r"], body["theta"])
        if "p" in self.initial:
            p = np.array(self.initial["p"], dtype=float)
        if "q" in self.initial:
            q = np.array(self.initial["q"], dtype=float)
        return p, q

    def state_vector(self, which: str) -> np.ndarray:
        """Full state vector for 'initial' or 'target' (fingers nominal at the target)."""
        body = self.body_state(which)
        if which == "initial":
            p, q = self.initial_fingers()
        else:
            p, q = self.nominal_fingers(body["r"], body["theta"])
        x = np.zeros(self.n_x)
        off = self.state_offsets
        for key in BODY_FAMILIES:
            x[off[key]] = body[key]
        x[off["p"]] = p.reshape(-1)
        x[off["q"]] = q.reshape(-1)
        d = np.array([p[2 * l + 1] - p[2 * l] for l in range(self.robot.n_limbs)])
        x[off["d"]] = d.reshape(-1)
        return x

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "name": self.name,
            "description": self.description,
            "robot": self.robot.to_dict(),
            "regions": [r.to_dict() for r in self.regions],
            "obstacles": [v.to_dict() for v in self.obstacles],
            "horizon": self.horizon,
            "dt": self.dt,
            "initial": copy.deepcopy(self.initial),
            "target": copy.deepcopy(self.target),
            "weights": copy.deepcopy(self.weights),
            "bounds": copy.deepcopy(self.bounds),
            "admm": asdict(self.admm),
            "solver": asdict(self.solver),
            "linearize_at": _list(self.linearize_at),
            "patch_constraints": self.patch_constraints,
            "pins": [pin.to_dict() for pin in self.pins],
            "big_m": self.big_m,
        }


def _pin_from_dict(data) -> WrenchPin:
    return WrenchPin(
        finger=_require(data, "finger"),
        component=_require(data, "component"),
        value=_require(data, "value"),
        region=data.get("region"),
    )


def scenario_from_dict(data: dict) -> Scenario:
    """
    Build a validated Scenario from its document form.

    Raises:
        ScenarioError: If a field is missing, mistyped or violates an invariant
    """
    if not isinstance(data, dict):
        raise ScenarioError("<root>", "expected a JSON object")
    version = data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ScenarioError("schema_version", f"unsupported version {version!r}, expected {SCHEMA_VERSION}")
    robot = _nested("robot", lambda: RobotModel.from_dict(_require(data, "robot")))
    regions_data = _require(data, "regions")
    if not isinstance(regions_data, list):
        raise ScenarioError("regions", "expected a list")
    regions = [_nested(_join("regions", c), lambda c=c: GraspRegion.from_dict(regions_data[c])) for c in range(len(regions_data))]
    obstacles_data = data.get("obstacles", [])
    if not isinstance(obstacles_data, list):
        raise ScenarioError("obstacles", "expected a list")
    obstacles = [_nested(_join("obstacles", v), lambda v=v: Obstacle.from_dict(obstacles_data[v])) for v in range(len(obstacles_data))]
    pins_data = data.get("pins", [])
    if not isinstance(pins_data, list):
        raise ScenarioError("pins", "expected a list")
    pins = [_nested(_join("pins", j), lambda j=j: _pin_from_dict(pins_data[j])) for j in range(len(pins_data))]
    for key in ("initial", "target", "bounds"):
        if not isinstance(_require(data, key), dict):
            raise ScenarioError(key, "expected an object")
    return Scenario(
        name=str(data.get("name", "scenario")),
        description=str(data.get("description", "")),
        robot=robot,
        regions=tuple(regions),
        obstacles=tuple(obstacles),
        horizon=_require(data, "horizon"),
        dt=_require(data, "dt"),
        initial=data["initial"],
        target=data["target"],
        weights=data.get("weights", {}),
        bounds=data["bounds"],
        admm=_settings_from_dict(AdmmSettings, data.get("admm"), "admm"),
        solver=_settings_from_dict(SolverSettings, data.get("solver"), "solver"),
        linearize_at=data.get("linearize_at", [0.0, 0.0, 0.0]),
        patch_constraints=data.get("patch_constraints", True),
        pins=tuple(pins),
        big_m=data.get("big_m", DEFAULT_BIG_M),
    )


def load_scenario(path) -> Scenario:
    """
    Load and validate a scenario file.

    Args:
        path: Path to a JSON scenario document

    Returns:
        Validated Scenario

    Raises:
        FileNotFoundError: If the file doesn't exist
        ScenarioError: If the document violates the schema
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Scenario file not found: {path}")
    with open(path) as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as exc:
            raise ScenarioError("<root>", f"cannot parse {path}: {exc}") from None
    scenario = scenario_from_dict(data)
    logger.info(f"Loaded scenario '{scenario.name}' from {path}: N={scenario.horizon}, "
                f"C={scenario.n_regions}, V={scenario.n_obstacles}")
    return scenario


def save_scenario(scenario: Scenario, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(scenario.to_dict(), indent=2) + "\n")
    logger.debug(f"Wrote scenario '{scenario.name}' to {path}")
    return path


def apply_overrides(scenario: Scenario, rho: Optional[float] = None, horizon: Optional[int] = None,
                    dt: Optional[float] = None, iterations: Optional[int] = None) -> Scenario:
    """Return a copy of scenario with run-time overrides applied."""
    changes = {}
    if horizon is not None:
        changes["horizon"] = horizon
    if dt is not None:
        changes["dt"] = dt
    admm_changes = {}
    if rho is not None:
        admm_changes["rho"] = rho
    if iterations is not None:
        admm_changes["iterations"] = iterations
    if admm_changes:
        changes["admm"] = _nested("admm", lambda: replace(scenario.admm, **admm_changes))
    return replace(scenario, **changes) if changes else scenario
