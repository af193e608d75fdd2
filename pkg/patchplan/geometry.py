"""Frames, rigid transforms, wrenches and Z-Y-X Euler kinematics."""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation


logger = logging.getLogger(__name__)

ORTHONORMAL_TOL = 1e-9
PITCH_SINGULARITY_MARGIN = 1e-3
GIMBAL_TOL = 1e-9


class SingularityError(ValueError):
    """Euler rates requested too close to gimbal lock."""


def as_vector3(values, name: str = "vector") -> np.ndarray:
    """Return a finite, read-only float 3-vector."""
    arr = np.array(values, dtype=float).reshape(-1)
    if arr.shape != (3,):
        raise ValueError(f"{name} must have 3 components, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite, got {arr.tolist()}")
    arr.setflags(write=False)
    return arr


def skew(v: np.ndarray) -> np.ndarray:
    """Cross-product matrix: skew(a) @ b == cross(a, b)."""
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


def _rot_x(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _rot_y(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _rot_z(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _drot_x(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[0.0, 0.0, 0.0], [0.0, -s, -c], [0.0, c, -s]])


def _drot_y(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[-s, 0.0, c], [0.0, 0.0, 0.0], [-c, 0.0, -s]])


def _drot_z(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[-s, -c, 0.0], [c, -s, 0.0], [0.0, 0.0, 0.0]])


def rotation_matrix(theta) -> np.ndarray:
    """
    Body-to-world rotation for angles (roll, pitch, yaw).

    R = Rz(yaw) @ Ry(pitch) @ Rx(roll), the intrinsic Z-Y-X convention.
    """
    roll, pitch, yaw = np.asarray(theta, dtype=float)
    return Rotation.from_euler("ZYX", [yaw, pitch, roll]).as_matrix()


def euler_angles(R) -> np.ndarray:
    """
    Angles (roll, pitch, yaw) with rotation_matrix(angles) == R.

    At pitch = +-pi/2 only yaw - roll (or yaw + roll) is determined; roll is
    then set to zero.
    """
    R = np.asarray(R, dtype=float)
    pitch = np.arcsin(np.clip(-R[2, 0], -1.0, 1.0))
    if np.hypot(R[0, 0], R[1, 0]) < GIMBAL_TOL:
        return np.array([0.0, pitch, np.arctan2(-R[0, 1], R[1, 1])])
    return np.array([np.arctan2(R[2, 1], R[2, 2]), pitch, np.arctan2(R[1, 0], R[0, 0])])


def rotation_partials(theta) -> np.ndarray:
    """
    Partial derivatives of rotation_matrix.

    Returns:
        Array of shape (3, 3, 3); entry [k] is dR/dtheta_k
    """
    roll, pitch, yaw = np.asarray(theta, dtype=float)
    rx, ry, rz = _rot_x(roll), _rot_y(pitch), _rot_z(yaw)
    return np.stack([
        rz @ ry @ _drot_x(roll),
        rz @ _drot_y(pitch) @ rx,
        _drot_z(yaw) @ ry @ rx,
    ])


def euler_rate_matrix(theta) -> np.ndarray:
    """
    Map Euler-angle rates to world-frame angular velocity.

    omega = E(theta) @ thetadot for the Z-Y-X convention of rotation_matrix.

    Raises:
        SingularityError: If pitch is within 1e-3 rad of +-pi/2
    """
    _, pitch, yaw = np.asarray(theta, dtype=float)
    cp, sp = np.cos(pitch), np.sin(pitch)
    if abs(cp) < np.sin(PITCH_SINGULARITY_MARGIN):
        raise SingularityError(f"Euler rates are singular at pitch={pitch:.6f} rad")
    cy, sy = np.cos(yaw), np.sin(yaw)
    return np.array([
        [cy * cp, -sy, 0.0],
        [sy * cp, cy, 0.0],
        [-sp, 0.0, 1.0],
    ])


def euler_rate_partials(theta, thetadot) -> np.ndarray:
    """
    Jacobian of E(theta) @ thetadot with respect to theta.

    Column k holds (dE/dtheta_k) @ thetadot. Roll does not enter E.
    """
    _, pitch, yaw = np.asarray(theta, dtype=float)
    rates = np.asarray(thetadot, dtype=float)
    cp, sp = np.cos(pitch), np.sin(pitch)
    cy, sy = np.cos(yaw), np.sin(yaw)
    d_pitch = np.array([
        [-cy * sp, 0.0, 0.0],
        [-sy * sp, 0.0, 0.0],
        [-cp, 0.0, 0.0],
    ])
    d_yaw = np.array([
        [-sy * cp, -cy, 0.0],
        [cy * cp, -sy, 0.0],
        [0.0, 0.0, 0.0],
    ])
    jac = np.zeros((3, 3))
    jac[:, 1] = d_pitch @ rates
    jac[:, 2] = d_yaw @ rates
    return jac


def angular_velocity(theta, thetadot) -> np.ndarray:
    """World-frame angular velocity from Euler angles and their rates."""
    return euler_rate_matrix(theta) @ np.asarray(thetadot, dtype=float)


@dataclass(frozen=True, eq=False)
class Pose:
    """Position (m) and Z-Y-X Euler orientation (rad); angles are not wrapped."""

    position: np.ndarray
    orientation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", as_vector3(self.position, "position"))
        object.__setattr__(self, "orientation", as_vector3(self.orientation, "orientation"))

    def transform(self) -> "RigidTransform":
        """Transform taking body coordinates to world coordinates."""
        return RigidTransform(rotation_matrix(self.orientation), self.position)


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """
    Rigid transform taking coordinates in a source frame to a target frame.

    p_target = rotation @ p_source + translation
    """

    rotation: np.ndarray
    translation: np.ndarray
    source: str = ""
    target: str = ""

    def __post_init__(self):
        rot = np.array(self.rotation, dtype=float)
        if rot.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {rot.shape}")
        if not np.all(np.isfinite(rot)):
            raise ValueError("rotation must be finite")
        if np.max(np.abs(rot.T @ rot - np.eye(3))) > ORTHONORMAL_TOL:
            raise ValueError("rotation must be orthonormal")
        if abs(np.linalg.det(rot) - 1.0) > ORTHONORMAL_TOL:
            raise ValueError("rotation must have determinant +1")
        rot.setflags(write=False)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", as_vector3(self.translation, "translation"))

    @classmethod
    def identity(cls, source: str = "", target: str = "") -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3), source, target)

    @classmethod
    def from_euler(cls, angles, translation, source: str = "", target: str = "") -> "RigidTransform":
        """Build from (roll, pitch, yaw) and a translation."""
        return cls(rotation_matrix(angles), translation, source, target)

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """Return self o other (apply other first)."""
        if self.source and other.target and self.source != other.target:
            raise ValueError(f"cannot compose {other.target!r} into {self.source!r}")
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
            other.source,
            self.target,
        )

    def inverse(self) -> "RigidTransform":
        rot_t = self.rotation.T
        return RigidTransform(rot_t, -rot_t @ self.translation, self.target, self.source)

    def apply(self, p) -> np.ndarray:
        return self.rotation @ np.asarray(p, dtype=float) + self.translation

    def apply_inverse(self, p) -> np.ndarray:
        """Map target-frame coordinates back to the source frame."""
        return self.rotation.T @ (np.asarray(p, dtype=float) - self.translation)

    def euler(self) -> np.ndarray:
        """(roll, pitch, yaw) of the rotation."""
        return euler_angles(self.rotation)

    def is_close(self, other: "RigidTransform", tol: float = 1e-9) -> bool:
        return (
            np.max(np.abs(self.rotation - other.rotation)) <= tol
            and np.max(np.abs(self.translation - other.translation)) <= tol
        )


@dataclass(frozen=True, eq=False)
class Wrench:
    """Force (N) and moment (N m) expressed in a named frame."""

    force: np.ndarray
    moment: np.ndarray
    frame: str = "world"

    def __post_init__(self):
        object.__setattr__(self, "force", as_vector3(self.force, "force"))
        object.__setattr__(self, "moment", as_vector3(self.moment, "moment"))

    @classmethod
    def from_vector(cls, values, frame: str = "world") -> "Wrench":
        """Build from [fx, fy, fz, tx, ty, tz]."""
        arr = np.asarray(values, dtype=float).reshape(-1)
        if arr.shape != (6,):
            raise ValueError(f"wrench vector must have 6 components, got {arr.size}")
        return cls(arr[:3], arr[3:], frame)

    @classmethod
    def zero(cls, frame: str = "world") -> "Wrench":
        return cls(np.zeros(3), np.zeros(3), frame)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.force, self.moment])


def transform_point(T: RigidTransform, p) -> np.ndarray:
    """Map a point from T's source frame to its target frame."""
    return T.apply(p)


def transform_wrench(T: RigidTransform, w: Wrench) -> Wrench:
    """
    Rotate a wrench from T's source frame into its target frame.

    Forces and moments are colocated at the contact point, so only the
    rotation acts; lever arms enter the moment balance of the dynamics.
    """
    if T.source and w.frame and T.source != w.frame:
        raise ValueError(f"wrench is in frame {w.frame!r}, transform expects {T.source!r}")
    return Wrench(T.rotation @ w.force, T.rotation @ w.moment, T.target or w.frame)
