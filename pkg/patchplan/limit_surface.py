"""
Patch-contact limit surfaces.

A patch contact carries shear force, normal force and torsion about the
face normal. The frictional part is bounded by an ellipsoid scaled with the
normal force, the micro-spine part by a box that needs no normal force, and
the patch as a whole by their Minkowski sum. Wrenches are expressed in the
region frame (z along the face normal).
"""

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .geometry import Wrench


logger = logging.getLogger(__name__)

MEMBERSHIP_TOL = 1e-9
GRID_STEPS = 100
REFINE_ITERATIONS = 60

# Variable order of the linearized friction family.
FAMILY_VARIABLES = ("fx", "fy", "fz", "mz", "mz_plus", "mz_minus", "gamma")


@dataclass(frozen=True)
class FrictionLimitSurface:
    """
    Frictional ellipsoid.

    A patch contact needs a positive torsion constant. Zero is reserved for
    point contacts, which transmit no torsion; build those with `point`.
    """

    mu: float
    torsion: float
    f_max: float

    def __post_init__(self):
        if not self.mu >= 0.0:
            raise ValueError(f"mu must be >= 0, got {self.mu}")
        if not self.torsion >= 0.0:
            raise ValueError(f"torsion constant must be > 0 for a patch contact "
                             f"(0 only for a point contact), got {self.torsion}")
        if not self.f_max > 0.0:
            raise ValueError(f"f_max must be > 0, got {self.f_max}")

    @classmethod
    def point(cls, mu: float, f_max: float) -> "FrictionLimitSurface":
        """Friction cone of a point contact."""
        return cls(mu, 0.0, f_max)

    @property
    def point_contact(self) -> bool:
        return self.torsion == 0.0

    def ellipsoid_value(self, fx: float, fy: float, fz: float, mz: float) -> float:
        """Left-hand side of the ellipsoid test; inf when fz <= 0 and the wrench is nonzero."""
        shear2 = fx * fx + fy * fy
        if fz <= 0.0:
            return 0.0 if shear2 == 0.0 and mz == 0.0 else np.inf
        value = 0.0
        if shear2 > 0.0:
            value += np.inf if self.mu == 0.0 else shear2 / (self.mu * fz) ** 2
        if mz != 0.0:
            scale = self.torsion * self.mu * fz
            value += np.inf if scale == 0.0 else (mz / scale) ** 2
        return value


@dataclass(frozen=True)
class SpineLimitSurface:
    """Micro-spine box: shear and torsion caps, no normal force."""

    fx_max: float
    fy_max: float
    tau_max: float

    def __post_init__(self):
        for name in ("fx_max", "fy_max", "tau_max"):
            if not getattr(self, name) >= 0.0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")

    @property
    def caps(self) -> np.ndarray:
        return np.array([self.fx_max, self.fy_max, self.tau_max])


@dataclass(frozen=True)
class PatchLimitSurface:
    """Minkowski sum of a friction ellipsoid and a spine box."""

    friction: FrictionLimitSurface
    spine: SpineLimitSurface

    def contains(self, w: Wrench, tol: float = MEMBERSHIP_TOL) -> bool:
        return patch_contains(self, w, tol)


def friction_contains(s: FrictionLimitSurface, w: Wrench, tol: float = MEMBERSHIP_TOL) -> bool:
    """
    Test a region-frame wrench against the friction ellipsoid.

    At zero normal force only the zero wrench is contained.
    """
    fx, fy, fz = w.force
    tx, ty, tz = w.moment
    if abs(tx) > tol or abs(ty) > tol:
        return False
    if fz < -tol or fz > s.f_max + tol:
        return False
    if fz <= tol or s.mu == 0.0:
        return np.hypot(fx, fy) <= tol and abs(tz) <= tol
    if s.point_contact:
        if abs(tz) > tol:
            return False
        tz = 0.0
    return s.ellipsoid_value(fx, fy, fz, tz) <= 1.0 + tol


def spine_contains(s: SpineLimitSurface, w: Wrench, tol: float = MEMBERSHIP_TOL) -> bool:
    """Test a region-frame wrench against the spine box."""
    fx, fy, fz = w.force
    tx, ty, tz = w.moment
    return (
        abs(fx) <= s.fx_max + tol
        and abs(fy) <= s.fy_max + tol
        and abs(fz) <= tol
        and abs(tx) <= tol
        and abs(ty) <= tol
        and abs(tz) <= s.tau_max + tol
    )


def _closest_on_interval(value: float, cap: float) -> float:
    """
    Point of [-cap, cap] closest to value.

    Coarse grid at cap/100 followed by bisection on the bracketing cells.
    """
    if cap <= 0.0:
        return 0.0
    grid = np.linspace(-cap, cap, 2 * GRID_STEPS + 1)
    j = int(np.argmin(np.abs(value - grid)))
    lo = grid[max(j - 1, 0)]
    hi = grid[min(j + 1, grid.size - 1)]
    for _ in range(REFINE_ITERATIONS):
        mid = 0.5 * (lo + hi)
        if value > mid:
            lo = mid
        else:
            hi = mid
    candidates = (lo, hi, grid[j])
    return min(candidates, key=lambda c: (abs(value - c), c))


def decompose_patch_wrench(s: PatchLimitSurface, w: Wrench) -> Tuple[Wrench, Wrench]:
    """
    Split a wrench into friction and spine parts.

    The ellipsoid test is separable in shear x, shear y and torsion, so the
    spine part minimizing it is found one axis at a time.

    Returns:
        Tuple of (friction part, spine part), both in w's frame
    """
    fx, fy, fz = w.force
    tz = w.moment[2]
    caps = s.spine.caps
    sx = _closest_on_interval(fx, caps[0])
    sy = _closest_on_interval(fy, caps[1])
    sm = _closest_on_interval(tz, caps[2])
    friction = Wrench([fx - sx, fy - sy, fz], [w.moment[0], w.moment[1], tz - sm], w.frame)
    spine = Wrench([sx, sy, 0.0], [0.0, 0.0, sm], w.frame)
    return friction, spine


def patch_contains(s: PatchLimitSurface, w: Wrench, tol: float = MEMBERSHIP_TOL) -> bool:
    """True iff w is the sum of a friction-feasible and a spine-feasible wrench."""
    fz = w.force[2]
    if abs(fz) <= tol:
        return spine_contains(s.spine, Wrench([w.force[0], w.force[1], 0.0], w.moment, w.frame), tol)
    if friction_contains(s.friction, w, tol):
        return True
    friction, spine = decompose_patch_wrench(s, w)
    return friction_contains(s.friction, friction, tol) and spine_contains(s.spine, spine, tol)


@dataclass(frozen=True)
class LinearizedFrictionFamily:
    """
    Piecewise-linear inner model of the friction ellipsoid.

    Rows read lower <= matrix @ v <= upper with v ordered as FAMILY_VARIABLES.
    indicator_rows are the rows switched by gamma.
    """

    matrix: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    tags: Tuple[str, ...]
    indicator_rows: Tuple[int, ...]
    variables: Tuple[str, ...] = FAMILY_VARIABLES

    def violation(self, point) -> float:
        v = np.asarray(point, dtype=float)
        row = self.matrix @ v
        return float(max(0.0, np.max(self.lower - row), np.max(row - self.upper)))

    def satisfied(self, point, tol: float = MEMBERSHIP_TOL) -> bool:
        return self.violation(point) <= tol


def linearized_friction_constraints(s: FrictionLimitSurface, patch_coupling: bool = True) -> LinearizedFrictionFamily:
    """
    Emit the linearized friction family over (fx, fy, fz, mz, mz+, mz-, gamma).

    Shear on each axis is bounded by mu*fz less the split torsion over k;
    torsion splits as mz = mz+ - mz- with gamma selecting the active sign.
    Without patch coupling (or at k = 0) shear is bounded by mu*fz alone.

    Args:
        s: Friction surface
        patch_coupling: Couple torsion into the shear rows

    Returns:
        LinearizedFrictionFamily
    """
    mu, k = s.mu, s.torsion
    big_m = k * mu * s.f_max
    coupled = patch_coupling and k > 0.0
    rows, lower, upper, tags = [], [], [], []

    def add(coeffs, lo, hi, tag):
        row = np.zeros(len(FAMILY_VARIABLES))
        for name, value in coeffs.items():
            row[FAMILY_VARIABLES.index(name)] = value
        rows.append(row)
        lower.append(lo)
        upper.append(hi)
        tags.append(tag)

    for axis in ("fx", "fy"):
        for sign in (1.0, -1.0):
            for split in ("mz_plus", "mz_minus"):
                coeffs = {axis: sign, "fz": -mu}
                if coupled:
                    coeffs[split] = 1.0 / k
                add(coeffs, -np.inf, 0.0, f"shear_{axis}")
                if not coupled:
                    break
    add({"mz": 1.0, "mz_plus": -1.0, "mz_minus": 1.0}, 0.0, 0.0, "torsion_split")
    add({"mz": 1.0, "fz": -k * mu}, -np.inf, 0.0, "torsion_cap")
    add({"mz": -1.0, "fz": -k * mu}, -np.inf, 0.0, "torsion_cap")
    add({"fz": 1.0}, 0.0, s.f_max, "normal")
    add({"mz_plus": 1.0}, 0.0, np.inf, "split_sign")
    add({"mz_minus": 1.0}, 0.0, np.inf, "split_sign")
    add({"gamma": 1.0}, 0.0, 1.0, "gamma_range")
    first_indicator = len(rows)
    add({"mz_minus": 1.0, "gamma": big_m}, -np.inf, big_m, "indicator")
    add({"mz_plus": 1.0, "gamma": -big_m}, -np.inf, 0.0, "indicator")
    return LinearizedFrictionFamily(
        matrix=np.array(rows),
        lower=np.array(lower),
        upper=np.array(upper),
        tags=tuple(tags),
        indicator_rows=(first_indicator, first_indicator + 1),
    )


def split_torsion(mz: float) -> Tuple[float, float, int]:
    """
    Split torsion into (mz+, mz-, gamma); zero torsion takes gamma = 1.
    """
    if mz >= 0.0:
        return float(mz), 0.0, 1
    return 0.0, float(-mz), 0


def couple_paired_fingers(w1: Wrench, w2: Wrench) -> np.ndarray:
    """Paired-finger residual [f1x - f2x, f1y - f2y, t1z - t2z]."""
    return np.array([
        w1.force[0] - w2.force[0],
        w1.force[1] - w2.force[1],
        w1.moment[2] - w2.moment[2],
    ])
