"""
Linear transcription of the planning problem.

Each builder turns one part of the model (cost, force dynamics, kinematics,
contact logic, wrench transforms, collision avoidance) into sparse data over
a VariableLayout. Logical implications use per-row big-M constants computed
from the variable bounds.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from .geometry import rotation_matrix
from .layout import VariableLayout
from .limit_surface import linearized_friction_constraints
from .scenario import FACES_PER_OBSTACLE, Scenario, ScenarioError


logger = logging.getLogger(__name__)

BIG_M_MARGIN = 1.1
FEASIBILITY_TOL = 1e-9
# Family rows already covered by variable bounds.
BOUND_TAGS = ("normal", "split_sign", "gamma_range", "indicator")


@dataclass
class QuadraticObjective:
    """0.5 x'Px + q'x + constant over a flat layout."""

    P: sp.csc_matrix
    q: np.ndarray
    constant: float = 0.0
    name: str = ""

    @property
    def n(self) -> int:
        return self.q.size

    def value(self, x: np.ndarray) -> float:
        return float(0.5 * x @ (self.P @ x) + self.q @ x + self.constant)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self.P @ x + self.q

    def hessian(self, x: Optional[np.ndarray] = None) -> sp.csc_matrix:
        return self.P

    def min_eigenvalue(self) -> float:
        if self.n == 0:
            return 0.0
        if self.n <= 3000:
            return float(np.min(np.linalg.eigvalsh(self.P.toarray())))
        from scipy.sparse.linalg import eigsh
        return float(eigsh(self.P, k=1, which="SA", return_eigenvectors=False)[0])

    def is_psd(self, tol: float = 1e-10) -> bool:
        scale = max(1.0, float(abs(self.P).max())) if self.P.nnz else 1.0
        return self.min_eigenvalue() >= -tol * scale

    def plus(self, other: "QuadraticObjective") -> "QuadraticObjective":
        return QuadraticObjective((self.P + other.P).tocsc(), self.q + other.q,
                                  self.constant + other.constant, self.name)


@dataclass
class BigMLink:
    """
    Row relaxed by a binary expression.

    The row binds when sum(binaries) == count (or, if negated, when every
    binary is 0); otherwise it is relaxed by big_m.
    """

    row: int
    binaries: Tuple[int, ...]
    big_m: float
    count: int = 1
    negated: bool = False


@dataclass
class LinearConstraintSet:
    """Rows lower <= A x <= upper with their tags, binaries and big-M links."""

    A: sp.csr_matrix
    lower: np.ndarray
    upper: np.ndarray
    tags: List[str]
    binaries: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    links: List[BigMLink] = field(default_factory=list)
    name: str = ""

    def __post_init__(self):
        if np.any(self.lower > self.upper):
            bad = int(np.flatnonzero(self.lower > self.upper)[0])
            raise ValueError(f"row {bad} ({self.tags[bad]}) has lower > upper")

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]

    def row_violation(self, x: np.ndarray) -> np.ndarray:
        ax = self.A @ x
        return np.maximum(0.0, np.maximum(self.lower - ax, ax - self.upper))

    def max_violation(self, x: np.ndarray) -> float:
        return float(np.max(self.row_violation(x))) if self.n_rows else 0.0

    def count(self, tag: str) -> int:
        return sum(1 for t in self.tags if t == tag)

    def select(self, tags: Sequence[str]) -> "LinearConstraintSet":
        rows = [k for k, t in enumerate(self.tags) if t in tags]
        return LinearConstraintSet(self.A[rows], self.lower[rows], self.upper[rows],
                                   [self.tags[k] for k in rows], self.binaries, [], self.name)

    @staticmethod
    def stack(sets: Sequence["LinearConstraintSet"], name: str = "") -> "LinearConstraintSet":
        offset = 0
        links = []
        for cs in sets:
            links += [BigMLink(l.row + offset, l.binaries, l.big_m, l.count, l.negated) for l in cs.links]
            offset += cs.n_rows
        binaries = np.unique(np.concatenate([cs.binaries for cs in sets])) if sets else np.zeros(0, dtype=np.int64)
        return LinearConstraintSet(
            A=sp.vstack([cs.A for cs in sets]).tocsr(),
            lower=np.concatenate([cs.lower for cs in sets]),
            upper=np.concatenate([cs.upper for cs in sets]),
            tags=[t for cs in sets for t in cs.tags],
            binaries=binaries.astype(np.int64),
            links=links,
            name=name,
        )

    def audit_big_m(self, lb: np.ndarray, ub: np.ndarray, tol: float = 1e-9) -> List[int]:
        """
        Rows whose big-M fails to relax them at the variable bounds.

        Each linked row is evaluated with its binaries at the relaxing value
        and the continuous part at the extremes of the bounds.
        """
        failures = []
        A = self.A.tocsr()
        for link in self.links:
            start, stop = A.indptr[link.row], A.indptr[link.row + 1]
            cols, vals = A.indices[start:stop], A.data[start:stop]
            binary_value = {}
            if link.negated:
                binary_value[link.binaries[0]] = 1.0
            else:
                for k, b in enumerate(link.binaries):
                    binary_value[b] = 1.0 if k < link.count - 1 else 0.0
            lo_sum = hi_sum = 0.0
            for col, val in zip(cols, vals):
                if col in binary_value:
                    lo_sum += val * binary_value[col]
                    hi_sum += val * binary_value[col]
                else:
                    lo_sum += min(val * lb[col], val * ub[col])
                    hi_sum += max(val * lb[col], val * ub[col])
            scale = tol * max(1.0, abs(link.big_m))
            if hi_sum > self.upper[link.row] + scale or lo_sum < self.lower[link.row] - scale:
                failures.append(link.row)
        return failures


def dump_triplets(cs: LinearConstraintSet, path, labels: Optional[List[str]] = None) -> Path:
    """
    Write a constraint set as sparse triplets.

    One line per nonzero: row col value lower upper [tag] [label]. Rows
    without nonzeros are written with col -1.
    """
    path = Path(path)
    A = cs.A.tocsr()
    with open(path, "w") as f:
        f.write(f"# {cs.name}: {cs.n_rows} rows, {cs.n} columns, {A.nnz} nonzeros\n")
        f.write("# row col value lower upper tag label\n")
        for row in range(cs.n_rows):
            start, stop = A.indptr[row], A.indptr[row + 1]
            lo, hi = repr(float(cs.lower[row])), repr(float(cs.upper[row]))
            if start == stop:
                f.write(f"{row} -1 0.0 {lo} {hi} {cs.tags[row]} -\n")
            for col, val in zip(A.indices[start:stop], A.data[start:stop]):
                label = labels[col] if labels else "-"
                f.write(f"{row} {col} {repr(float(val))} {lo} {hi} {cs.tags[row]} {label}\n")
    logger.debug(f"Dumped {cs.n_rows} rows to {path}")
    return path


class RowBuilder:
    """Accumulates sparse rows and big-M implications for one constraint set."""

    def __init__(self, layout: VariableLayout, name: str):
        self.layout = layout
        self.name = name
        self.lb, self.ub = layout.bounds()
        self.ceiling = layout.scenario.big_m
        self._rows: List[int] = []
        self._cols: List[int] = []
        self._vals: List[float] = []
        self.lower: List[float] = []
        self.upper: List[float] = []
        self.tags: List[str] = []
        self.links: List[BigMLink] = []

    def add(self, cols, vals, lo: float, hi: float, tag: str) -> int:
        row = len(self.lower)
        cols = np.atleast_1d(np.asarray(cols, dtype=np.int64))
        vals = np.broadcast_to(np.asarray(vals, dtype=float), cols.shape)
        keep = vals != 0.0
        self._rows += [row] * int(keep.sum())
        self._cols += cols[keep].tolist()
        self._vals += vals[keep].tolist()
        self.lower.append(float(lo))
        self.upper.append(float(hi))
        self.tags.append(tag)
        return row

    def _interval(self, cols, vals) -> Tuple[float, float]:
        cols = np.atleast_1d(np.asarray(cols, dtype=np.int64))
        vals = np.broadcast_to(np.asarray(vals, dtype=float), cols.shape)
        lo, hi = vals * self.lb[cols], vals * self.ub[cols]
        with np.errstate(invalid="ignore"):
            amin = float(np.sum(np.minimum(lo, hi)))
            amax = float(np.sum(np.maximum(lo, hi)))
        return amin, amax

    def _big_m(self, excess: float, tag: str) -> float:
        if not np.isfinite(excess):
            raise ScenarioError("bounds", f"unbounded variable in big-M row '{tag}'")
        big_m = BIG_M_MARGIN * max(0.0, excess)
        if big_m > self.ceiling:
            raise ScenarioError("big_m", f"row '{tag}' needs M={big_m:g}, above the ceiling {self.ceiling:g}")
        return big_m

    def implication(self, cols, vals, lo: float, hi: float, binaries: Sequence[int], tag: str,
                    count: Optional[int] = None, negated: bool = False):
        """
        Enforce lo <= a'x <= hi when the binary condition holds.

        The condition is sum(binaries) == count (count defaults to the number
        of binaries), or all binaries 0 when negated.
        """
        binaries = [int(b) for b in binaries]
        count = len(binaries) if count is None else count
        cols = np.atleast_1d(np.asarray(cols, dtype=np.int64))
        vals = np.broadcast_to(np.asarray(vals, dtype=float), cols.shape)
        amin, amax = self._interval(cols, vals)
        sides = []
        if np.isfinite(hi):
            sides.append((1.0, self._big_m(amax - hi, tag)))
        if np.isfinite(lo):
            sides.append((-1.0, self._big_m(lo - amin, tag)))
        for direction, big_m in sides:
            # direction +1: a'x <= hi + relax, direction -1: a'x >= lo - relax
            sign = direction if not negated else -direction
            coeff = [sign * big_m] * len(binaries)
            if direction > 0:
                bound_hi = hi + (big_m * count if not negated else 0.0)
                row = self.add(list(cols) + binaries, list(vals) + coeff, -np.inf, bound_hi, tag)
            else:
                bound_lo = lo - (big_m * count if not negated else 0.0)
                row = self.add(list(cols) + binaries, list(vals) + coeff, bound_lo, np.inf, tag)
            if big_m > 0.0:
                self.links.append(BigMLink(row, tuple(binaries), big_m, count, negated))

    def build(self, binaries: Optional[np.ndarray] = None) -> LinearConstraintSet:
        n = self.layout.n
        A = sp.csr_matrix((self._vals, (self._rows, self._cols)), shape=(len(self.lower), n))
        cs = LinearConstraintSet(
            A=A,
            lower=np.array(self.lower, dtype=float),
            upper=np.array(self.upper, dtype=float),
            tags=list(self.tags),
            binaries=np.zeros(0, dtype=np.int64) if binaries is None else binaries,
            links=list(self.links),
            name=self.name,
        )
        failures = cs.audit_big_m(self.lb, self.ub)
        if failures:
            raise ScenarioError("big_m", f"{len(failures)} big-M rows in '{self.name}' fail the bound audit")
        logger.debug(f"Built '{self.name}': {cs.n_rows} rows, {len(cs.links)} big-M links")
        return cs


def _triplets_block(rows: List[int], cols: List[int], vals: List[float], idx_r, idx_c, block: np.ndarray):
    nz_r, nz_c = np.nonzero(block)
    rows += idx_r[nz_r].tolist()
    cols += idx_c[nz_c].tolist()
    vals += block[nz_r, nz_c].tolist()


def build_cost(s: Scenario, layout: VariableLayout) -> QuadraticObjective:
    """
    Quadratic tracking, effort, swing-height, gripper and mode-switch cost.

    Body terms are scaled by layout.body_share so that limb blocks of the
    multi-block split share them.

    Raises:
        ValueError: If a weight matrix doesn't match the scenario dimensions
    """
    if s.Q.shape != (s.n_x, s.n_x) or s.R.shape != (s.n_u, s.n_u) or s.S.shape != (s.n_z, s.n_z):
        raise ValueError("weight matrices do not match the scenario dimensions")
    N = s.horizon
    smap = layout.state_map
    share = np.ones(smap.size)
    share[:12] = layout.body_share
    root = np.sqrt(share)
    Q = s.Q[np.ix_(smap, smap)] * np.outer(root, root)
    zeta = s.zeta[smap] * share
    x_goal = s.state_vector("target")[smap]
    cmap = layout.control_map
    R = s.R[np.ix_(cmap, cmap)]

    rows, cols, vals = [], [], []
    q = np.zeros(layout.n)
    constant = 0.0
    for t in range(N + 1):
        idx = layout.x_indices(t)
        _triplets_block(rows, cols, vals, idx, idx, 2.0 * Q)
        q[idx] += -2.0 * Q @ x_goal + zeta
        constant += float(x_goal @ Q @ x_goal)
        for l in layout.limbs:
            q[layout.at("p", t, 2 * l + 1)] += s.xi[l]
            q[layout.at("p", t, 2 * l)] -= s.xi[l]
    for t in range(N):
        idx = layout.u_indices(t)
        _triplets_block(rows, cols, vals, idx, idx, 2.0 * R)
    if layout.contacts and s.n_z:
        dmap = layout.discrete_map
        S = s.S[np.ix_(dmap, dmap)]
        for t in range(N - 1):
            z0, z1 = layout.z_indices(t), layout.z_indices(t + 1)
            _triplets_block(rows, cols, vals, z0, z0, 2.0 * S)
            _triplets_block(rows, cols, vals, z1, z1, 2.0 * S)
            _triplets_block(rows, cols, vals, z0, z1, -2.0 * S)
            _triplets_block(rows, cols, vals, z1, z0, -2.0 * S)
    P = sp.coo_matrix((vals, (rows, cols)), shape=(layout.n, layout.n)).tocsc()
    return QuadraticObjective(P, q, constant, name=f"cost[{layout.name}]")


def _active_fingers(s: Scenario, layout: VariableLayout) -> List[int]:
    return [i for i in layout.fingers if not s.robot.is_absent(i)]


def build_linear_dynamics(s: Scenario, layout: VariableLayout) -> LinearConstraintSet:
    """
    Explicit-Euler force dynamics and pose integration.

    M (rdot_{t+1} - rdot_t) / dt = sum_i lambda_t^i (+ slack_t) + M g,
    r_{t+1} = r_t + dt rdot_t, theta_{t+1} = theta_t + dt thetadot_t, and
    fingers hold still over the last interval.
    """
    b = RowBuilder(layout, f"dynamics[{layout.name}]")
    M, dt, g = s.robot.mass, s.dt, s.robot.gravity
    fingers = _active_fingers(s, layout)
    for t in range(s.horizon):
        for k in range(3):
            cols = [layout.at("rdot", t + 1)[k], layout.at("rdot", t)[k]]
            vals = [M / dt, -M / dt]
            for i in fingers:
                cols.append(layout.at("lambda", t, i)[k])
                vals.append(-1.0)
            if layout.slack:
                cols.append(layout.tables["slack"][t][k])
                vals.append(-1.0)
            b.add(cols, vals, M * g[k], M * g[k], "force_dynamics")
        for pos, vel in (("r", "rdot"), ("theta", "thetadot")):
            for k in range(3):
                b.add([layout.at(pos, t + 1)[k], layout.at(pos, t)[k], layout.at(vel, t)[k]],
                      [1.0, -1.0, -dt], 0.0, 0.0, f"{pos}_integration")
    N = s.horizon
    for i in layout.fingers:
        for family in ("p", "q"):
            for k in range(3):
                b.add([layout.at(family, N, i)[k], layout.at(family, N - 1, i)[k]], [1.0, -1.0], 0.0, 0.0, "terminal_hold")
    return b.build()


def build_kinematics(s: Scenario, layout: VariableLayout, linearize_at=None,
                     include_position: bool = True) -> LinearConstraintSet:
    """
    Kinematic boxes with a fixed rotation and the gripper coupling.

    |R0'(p - r) - a| <= b with R0 = R(linearize_at), |q - c - theta| <= d,
    p^{2l+1} = p^{2l} + d^l and q^{2l+1} = q^{2l}. Absent fingers follow
    their partner and carry no boxes of their own.
    """
    robot = s.robot
    angles = s.linearize_at if linearize_at is None else np.asarray(linearize_at, dtype=float)
    W = rotation_matrix(angles).T
    b = RowBuilder(layout, f"kinematics[{layout.name}]")
    for t in range(s.horizon + 1):
        r, theta = layout.at("r", t), layout.at("theta", t)
        for i in _active_fingers(s, layout):
            p, q = layout.at("p", t, i), layout.at("q", t, i)
            a, box = robot.finger_offsets[i], robot.finger_ranges[i]
            c, span = robot.finger_orientations[i], robot.orientation_ranges[i]
            if include_position:
                for k in range(3):
                    b.add(np.concatenate([p, r]), np.concatenate([W[k], -W[k]]),
                          a[k] - box[k], a[k] + box[k], "kinematics_position")
            for k in range(3):
                b.add([q[k], theta[k]], [1.0, -1.0], c[k] - span[k], c[k] + span[k], "kinematics_orientation")
        for l in layout.limbs:
            first, second = robot.limb_fingers(l)
            d = layout.at("d", t, l)
            for k in range(3):
                b.add([layout.at("p", t, second)[k], layout.at("p", t, first)[k], d[k]], [1.0, -1.0, -1.0],
                      0.0, 0.0, "gripper_coupling")
                b.add([layout.at("q", t, second)[k], layout.at("q", t, first)[k]], [1.0, -1.0],
                      0.0, 0.0, "gripper_coupling")
    return b.build()


def _compatible(s: Scenario, c: int, c2: int) -> bool:
    """Regions a gripper's two fingers may touch at the same time."""
    first, second = s.regions[c], s.regions[c2]
    return first.hold != second.hold or first.pair == second.id


def build_contact_logic(s: Scenario, layout: VariableLayout) -> LinearConstraintSet:
    """
    Big-M contact logic.

    For every (t, i, c): alpha = 1 activates the linearized patch model,
    region membership and finger stationarity; alpha = 0 forces the local
    wrench to zero. Each finger touches at most one region, gamma is 1
    without contact, and a gripper's fingers on the same hold must use
    paired faces with identical shear and torsion.
    """
    if not layout.contacts:
        raise ValueError(f"layout '{layout.name}' has no contact variables")
    robot = s.robot
    b = RowBuilder(layout, f"contact[{layout.name}]")
    fingers = _active_fingers(s, layout)
    families = [linearized_friction_constraints(region.surface.friction, s.patch_constraints) for region in s.regions]
    N = s.horizon
    for t in range(N):
        for i in fingers:
            alphas = [int(layout.at("alpha", t, i, c)) for c in range(s.n_regions)]
            b.add(alphas, 1.0, -np.inf, 1.0, "cardinality")
            for c, region in enumerate(s.regions):
                _patch_rows(b, layout, families[c], region, t, i, c)
                _membership_rows(b, layout, region, t, i, c)
            for family in ("p", "q"):
                nxt, now = layout.at(family, t + 1, i), layout.at(family, t, i)
                for k in range(3):
                    b.implication([nxt[k], now[k]], [1.0, -1.0], 0.0, 0.0, alphas, "stationarity", count=1)
        for pin in s.pins:
            if pin.component == "contact" or not layout.has_finger(pin.finger):
                continue
            regions = range(s.n_regions) if pin.region is None else [s.region_index(pin.region)]
            for c in regions:
                col = _pin_column(layout, pin.component, t, pin.finger, c)
                b.add([col, layout.at("alpha", t, pin.finger, c)], [1.0, -pin.value], 0.0, 0.0, "pin")
        if robot.point_contact:
            continue
        for l in layout.limbs:
            first, second = robot.limb_fingers(l)
            for c in range(s.n_regions):
                for c2 in range(s.n_regions):
                    a1, a2 = layout.at("alpha", t, first, c), layout.at("alpha", t, second, c2)
                    if not _compatible(s, c, c2):
                        b.add([a1, a2], [1.0, 1.0], -np.inf, 1.0, "paired_regions")
                    elif s.regions[c].pair == s.regions[c2].id:
                        f1, f2 = layout.at("f", t, first, c), layout.at("f", t, second, c2)
                        m1, m2 = layout.at("m", t, first, c), layout.at("m", t, second, c2)
                        for u, v in ((f1[0], f2[0]), (f1[1], f2[1]), (m1[2], m2[2])):
                            b.implication([u, v], [1.0, -1.0], 0.0, 0.0, [a1, a2], "paired_fingers")
    return b.build(binaries=layout.binary_indices)


def _pin_column(layout: VariableLayout, component: str, t: int, i: int, c: int) -> int:
    if component == "mz":
        return int(layout.at("m", t, i, c)[2])
    return int(layout.at("f", t, i, c)["xyz".index(component[1])])


def _patch_rows(b: RowBuilder, layout: VariableLayout, family, region, t: int, i: int, c: int):
    alpha = int(layout.at("alpha", t, i, c))
    gamma = int(layout.at("gamma", t, i, c))
    f, m = layout.at("f", t, i, c), layout.at("m", t, i, c)
    spine = layout.at("spine", t, i, c)
    plus, minus = int(layout.at("mz_plus", t, i, c)), int(layout.at("mz_minus", t, i, c))
    # Friction part of the local wrench = wrench - spine part.
    terms = {
        "fx": [(f[0], 1.0), (spine[0], -1.0)],
        "fy": [(f[1], 1.0), (spine[1], -1.0)],
        "fz": [(f[2], 1.0)],
        "mz": [(m[2], 1.0), (spine[2], -1.0)],
        "mz_plus": [(plus, 1.0)],
        "mz_minus": [(minus, 1.0)],
        "gamma": [(gamma, 1.0)],
    }
    for j, tag in enumerate(family.tags):
        if tag in BOUND_TAGS:
            continue
        cols, vals = [], []
        for name, coeff in zip(family.variables, family.matrix[j]):
            if coeff != 0.0:
                for col, sign in terms[name]:
                    cols.append(col)
                    vals.append(sign * coeff)
        b.add(cols, vals, family.lower[j], family.upper[j], tag)
    # gamma = 1 => mz- = 0, gamma = 0 => mz+ = 0
    b.implication([minus], [1.0], -np.inf, 0.0, [gamma], "torsion_sign")
    b.implication([plus], [1.0], -np.inf, 0.0, [gamma], "torsion_sign", negated=True)
    b.add([gamma, alpha], [1.0, 1.0], 1.0, np.inf, "torsion_tiebreak")
    # alpha = 0 => zero wrench and zero spine part
    for col in list(f) + [m[2]] + list(spine):
        b.implication([col], [1.0], -np.inf, 0.0, [alpha], "no_contact_wrench", negated=True)
        b.implication([col], [1.0], 0.0, np.inf, [alpha], "no_contact_wrench", negated=True)


def _membership_rows(b: RowBuilder, layout: VariableLayout, region, t: int, i: int, c: int):
    alpha = int(layout.at("alpha", t, i, c))
    p = layout.at("p", t, i)
    W = region.rotation.T
    origin = W @ region.position
    for k in range(2):
        b.implication(p, W[k], origin[k] - region.extent[k], origin[k] + region.extent[k], [alpha], "membership")
    b.implication(p, W[2], origin[2], origin[2], [alpha], "membership")
    if region.yaw_tolerance < np.pi:
        q_yaw = int(layout.at("q", t, i)[2])
        b.implication([q_yaw], [1.0], region.grasp_yaw - region.yaw_tolerance,
                      region.grasp_yaw + region.yaw_tolerance, [alpha], "membership_yaw")


def build_wrench_transform(s: Scenario, layout: VariableLayout) -> LinearConstraintSet:
    """lambda_t^i = sum_c R_c f_t^{i,c} and tau_t^i = sum_c R_c m_t^{i,c}."""
    b = RowBuilder(layout, f"wrench[{layout.name}]")
    for t in range(s.horizon):
        for i in layout.fingers:
            for world, local in (("lambda", "f"), ("tau", "m")):
                target = layout.at(world, t, i)
                for k in range(3):
                    cols, vals = [target[k]], [1.0]
                    for c, region in enumerate(s.regions):
                        cols += list(layout.at(local, t, i, c))
                        vals += list(-region.rotation[k])
                    b.add(cols, vals, 0.0, 0.0, "wrench_transform")
    return b.build()


def build_collision(s: Scenario, layout: VariableLayout) -> LinearConstraintSet:
    """
    Keep every finger outside each cuboid.

    beta_t^{i,v,h} = 0 activates the outer halfspace of face h; at most
    n_v - 1 faces may be exempt, so at least one outer halfspace holds.
    Faces use outward normals: n_h' (p_local) >= s_h.
    """
    b = RowBuilder(layout, f"collision[{layout.name}]")
    for t in range(s.horizon):
        for i in _active_fingers(s, layout):
            p = layout.at("p", t, i)
            for v, obstacle in enumerate(s.obstacles):
                W = obstacle.rotation.T
                betas = layout.at("beta", t, i, v)
                for h, (normal, offset) in enumerate(obstacle.faces):
                    row = normal @ W
                    b.implication(p, row, offset + row @ obstacle.position, np.inf, [betas[h]],
                                  "collision_face", negated=True)
                b.add(betas, 1.0, -np.inf, FACES_PER_OBSTACLE - 1, "collision_cardinality")
    return b.build(binaries=layout.binary_indices)


def build_miqp_constraints(s: Scenario, layout: VariableLayout) -> LinearConstraintSet:
    """All linear rows of a mixed-integer block."""
    parts = [
        build_linear_dynamics(s, layout),
        build_kinematics(s, layout),
        build_contact_logic(s, layout),
        build_wrench_transform(s, layout),
    ]
    if s.n_obstacles:
        parts.append(build_collision(s, layout))
    return LinearConstraintSet.stack(parts, name=f"miqp[{layout.name}]")


def build_nlp_linear_constraints(s: Scenario, layout: VariableLayout) -> LinearConstraintSet:
    """Linear rows of the smooth block: force dynamics, integration, orientation boxes, coupling."""
    return LinearConstraintSet.stack(
        [build_linear_dynamics(s, layout), build_kinematics(s, layout, include_position=False)],
        name=f"nlp[{layout.name}]",
    )


def constraint_counts(s: Scenario) -> Dict[str, int]:
    """Documented row counts of the full mixed-integer transcription."""
    N, n_f, C, V = s.horizon, s.robot.n_fingers, s.n_regions, s.n_obstacles
    return {
        "cardinality": N * n_f,
        "membership": N * n_f * C * 3 * 2,
        "collision_face": N * n_f * V * FACES_PER_OBSTACLE,
        "collision_cardinality": N * n_f * V,
        "wrench_transform": N * n_f * 6,
        "force_dynamics": N * 3,
    }
