"""
Flat variable layout shared by the transcription, the solvers and the ADMM blocks.

The layout is time-major: x_0, u_0, y_0, aux_0, z_0, x_1, ..., x_N. A layout
may cover a subset of the fingers (one limb of the multi-block split) and
may leave out the contact variables (the NLP block).
"""

import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .scenario import BODY_FAMILIES, FACES_PER_OBSTACLE, Scenario
from .trajectory import DiscreteVariables, TrajectoryVariables


logger = logging.getLogger(__name__)

FINGER_FAMILIES = ("p", "q", "lambda", "tau", "f", "m", "mz_plus", "mz_minus", "spine", "alpha", "beta", "gamma")
CONTACT_FAMILIES = ("f", "m", "mz_plus", "mz_minus", "spine")
BINARY_FAMILIES = ("alpha", "beta", "gamma")

# Trajectory attribute holding each layout family.
TRAJECTORY_FIELDS = {
    "r": "r", "theta": "theta", "rdot": "rdot", "thetadot": "thetadot",
    "p": "p", "q": "q", "d": "d", "lambda": "lam", "tau": "tau",
    "f": "f", "m": "m", "mz_plus": "mz_plus", "mz_minus": "mz_minus", "spine": "spine",
}


class VariableLayout:
    """
    Index tables for every decision variable of one optimization block.

    tables[name] has the shape of the matching trajectory array restricted to
    the layout's fingers (or limbs for d) and holds flat vector indices.
    """

    def __init__(self, scenario: Scenario, fingers: Optional[Sequence[int]] = None,
                 contacts: bool = True, slack: bool = False, name: str = "full", body_share: float = 1.0):
        robot = scenario.robot
        self.scenario = scenario
        self.name = name
        self.fingers: Tuple[int, ...] = tuple(range(robot.n_fingers)) if fingers is None else tuple(fingers)
        self.limbs: Tuple[int, ...] = tuple(sorted({robot.limb_of(i) for i in self.fingers}))
        for limb in self.limbs:
            if any(i not in self.fingers for i in robot.limb_fingers(limb)):
                raise ValueError(f"layout '{name}' must hold both fingers of limb {limb}")
        self.contacts = contacts
        self.slack = slack
        self.horizon = scenario.horizon
        self._finger_pos = {i: k for k, i in enumerate(self.fingers)}
        self._limb_pos = {l: k for k, l in enumerate(self.limbs)}
        self.tables: Dict[str, np.ndarray] = {}
        self._x_start: List[int] = []
        self._u_start: List[int] = []
        self._z_start: List[int] = []
        self._bounds = None
        self.body_share = body_share
        self._build()

    def _build(self):
        N, nf, nl = self.horizon, len(self.fingers), len(self.limbs)
        C, V = self.scenario.n_regions, self.scenario.n_obstacles
        shapes = {
            "r": (3,), "theta": (3,), "rdot": (3,), "thetadot": (3,),
            "p": (nf, 3), "q": (nf, 3), "d": (nl, 3),
            "lambda": (nf, 3), "tau": (nf, 3), "slack": (3,),
            "f": (nf, C, 3), "m": (nf, C, 3), "mz_plus": (nf, C), "mz_minus": (nf, C),
            "spine": (nf, C, 3), "alpha": (nf, C), "beta": (nf, V, FACES_PER_OBSTACLE), "gamma": (nf, C),
        }
        state = list(BODY_FAMILIES) + ["p", "q", "d"]
        control = ["lambda", "tau"] + (["slack"] if self.slack else [])
        contact = list(CONTACT_FAMILIES) if self.contacts else []
        discrete = list(BINARY_FAMILIES) if self.contacts else []
        for family in state:
            self.tables[family] = np.full((N + 1,) + shapes[family], -1, dtype=np.int64)
        for family in control + contact + discrete:
            self.tables[family] = np.full((N,) + shapes[family], -1, dtype=np.int64)

        offset = 0

        def take(family, t):
            nonlocal offset
            size = int(np.prod(shapes[family]))
            self.tables[family][t] = np.arange(offset, offset + size).reshape(shapes[family])
            offset += size

        for t in range(N + 1):
            self._x_start.append(offset)
            for family in state:
                take(family, t)
            if t == N:
                break
            self._u_start.append(offset)
            for family in control + contact:
                take(family, t)
            self._z_start.append(offset)
            for family in discrete:
                take(family, t)
        self.n = offset
        self.n_x = sum(int(np.prod(shapes[f])) for f in state)
        self.n_u = sum(int(np.prod(shapes[f])) for f in control)
        self.n_y = sum(int(np.prod(shapes[f])) for f in ("f", "m")) if self.contacts else 0
        self.n_aux = sum(int(np.prod(shapes[f])) for f in ("mz_plus", "mz_minus", "spine")) if self.contacts else 0
        self.n_z = sum(int(np.prod(shapes[f])) for f in discrete)
        assert self.n == self.n_x * (N + 1) + (self.n_u + self.n_y + self.n_aux + self.n_z) * N
        logger.debug(f"Layout '{self.name}': {self.n} variables, fingers={self.fingers}, contacts={self.contacts}")

    def __len__(self) -> int:
        return self.n

    def has(self, family: str) -> bool:
        return family in self.tables

    def has_finger(self, finger: int) -> bool:
        return finger in self._finger_pos

    def at(self, family: str, t: int, *key):
        """
        Flat indices of one variable.

        Finger families take the global finger index as first key, d the
        global limb index.
        """
        if family in FINGER_FAMILIES:
            key = (self._finger_pos[key[0]],) + tuple(key[1:])
        elif family == "d":
            key = (self._limb_pos[key[0]],) + tuple(key[1:])
        return self.tables[family][(t,) + key]

    def family(self, name: str) -> np.ndarray:
        if name not in self.tables:
            return np.zeros(0, dtype=np.int64)
        return np.sort(self.tables[name].reshape(-1))

    @property
    def binary_indices(self) -> np.ndarray:
        parts = [self.family(name) for name in BINARY_FAMILIES if name in self.tables]
        return np.sort(np.concatenate(parts)) if parts else np.zeros(0, dtype=np.int64)

    def x_indices(self, t: int) -> np.ndarray:
        return np.arange(self._x_start[t], self._x_start[t] + self.n_x)

    def u_indices(self, t: int) -> np.ndarray:
        """Indices of lambda and tau at t, in full control order."""
        return np.concatenate([self.tables["lambda"][t].reshape(-1), self.tables["tau"][t].reshape(-1)])

    def z_indices(self, t: int) -> np.ndarray:
        if not self.contacts:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate([self.tables[f][t].reshape(-1) for f in BINARY_FAMILIES])

    @property
    def state_map(self) -> np.ndarray:
        """Positions in the full state vector of the entries of x_indices(t)."""
        off = self.scenario.state_offsets
        parts = [np.arange(off[f].start, off[f].stop) for f in BODY_FAMILIES]
        parts += [off["p"].start + 3 * i + np.arange(3) for i in self.fingers]
        parts += [off["q"].start + 3 * i + np.arange(3) for i in self.fingers]
        parts += [off["d"].start + 3 * l + np.arange(3) for l in self.limbs]
        return np.concatenate(parts)

    @property
    def control_map(self) -> np.ndarray:
        """Positions in the full control vector of the entries of u_indices(t)."""
        off = self.scenario.control_offsets
        parts = [off["lambda"].start + 3 * i + np.arange(3) for i in self.fingers]
        parts += [off["tau"].start + 3 * i + np.arange(3) for i in self.fingers]
        return np.concatenate(parts)

    @property
    def discrete_map(self) -> np.ndarray:
        """Positions in the full discrete vector of the entries of z_indices(t)."""
        off = self.scenario.discrete_offsets
        C, V = self.scenario.n_regions, self.scenario.n_obstacles
        width = V * FACES_PER_OBSTACLE
        parts = [off["alpha"].start + C * i + np.arange(C) for i in self.fingers]
        parts += [off["beta"].start + width * i + np.arange(width) for i in self.fingers]
        parts += [off["gamma"].start + C * i + np.arange(C) for i in self.fingers]
        return np.concatenate(parts)

    def spans(self) -> Dict[str, Tuple[int, int]]:
        """name -> (offset, length) for every variable block, e.g. 'p[3][1]'."""
        spans = {}
        for family, table in self.tables.items():
            trailing = 3 if family in ("r", "theta", "rdot", "thetadot", "p", "q", "d", "lambda", "tau",
                                       "slack", "f", "m", "spine") else 0
            outer = table.shape[:-1] if trailing else table.shape
            for key in np.ndindex(*outer):
                label = family + "".join(f"[{self._label_key(family, pos, k)}]" for pos, k in enumerate(key))
                entry = table[key]
                start = int(entry.reshape(-1)[0])
                spans[label] = (start, int(np.size(entry)))
        return spans

    def _label_key(self, family: str, position: int, k: int) -> int:
        if position == 1 and family in FINGER_FAMILIES:
            return self.fingers[k]
        if position == 1 and family == "d":
            return self.limbs[k]
        return k

    def labels(self) -> List[str]:
        """Human-readable label of every flat index."""
        labels = [""] * self.n
        for label, (start, length) in self.spans().items():
            for j in range(length):
                labels[start + j] = f"{label}.{'xyz'[j]}" if length == 3 else label
        return labels

    def bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        """
        Variable bounds, with x_0 fixed to the initial state and r_N, rdot_N
        to the target.
        """
        if self._bounds is None:
            self._bounds = self._compute_bounds()
        lb, ub = self._bounds
        return lb.copy(), ub.copy()

    def _compute_bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        s = self.scenario
        robot = s.robot
        lb = np.full(self.n, -np.inf)
        ub = np.full(self.n, np.inf)
        N = self.horizon

        def put(idx, lo, hi):
            lb[idx] = lo
            ub[idx] = hi

        for family in ("r", "theta", "rdot", "thetadot", "p", "q", "lambda", "tau"):
            lo, hi = s.bound(family)
            put(self.tables[family], lo, hi)
        for k, l in enumerate(self.limbs):
            lo, hi = robot.separation_lower[l], robot.separation_upper[l]
            if robot.point_contact:
                lo = hi = np.zeros(3)
            put(self.tables["d"][:, k], lo, hi)

        for i in self.fingers:
            if robot.is_absent(i) or robot.point_contact:
                put(self.at("tau", slice(None), i), 0.0, 0.0)
            if robot.is_absent(i):
                put(self.at("lambda", slice(None), i), 0.0, 0.0)

        if self.slack:
            lam_lo, lam_hi = s.bound("lambda")
            others = [i for i in robot.active_fingers if i not in self.fingers]
            reach = len(others) * np.maximum(np.abs(lam_lo), np.abs(lam_hi))
            put(self.tables["slack"], -reach, reach)

        if self.contacts:
            self._contact_bounds(lb, ub)

        x0 = s.state_vector("initial")
        fixed = self.x_indices(0)
        lb[fixed] = ub[fixed] = x0[self.state_map]
        target = s.body_state("target")
        for family in ("r", "rdot"):
            lb[self.tables[family][N]] = ub[self.tables[family][N]] = target[family]
        return lb, ub

    def _contact_bounds(self, lb: np.ndarray, ub: np.ndarray):
        s = self.scenario
        robot = s.robot

        def put(idx, lo, hi):
            lb[idx] = lo
            ub[idx] = hi

        for i in self.fingers:
            absent = robot.is_absent(i)
            for c, region in enumerate(s.regions):
                f = self.at("f", slice(None), i, c)
                m = self.at("m", slice(None), i, c)
                spine = self.at("spine", slice(None), i, c)
                shear, torsion = region.shear_cap, region.torsion_cap
                split = region.torsion_constant * region.mu * region.f_max
                if absent:
                    put(f, 0.0, 0.0)
                    put(m, 0.0, 0.0)
                    put(spine, 0.0, 0.0)
                    split = 0.0
                else:
                    put(f, [-shear[0], -shear[1], 0.0], [shear[0], shear[1], region.f_max])
                    put(m, [0.0, 0.0, -torsion], [0.0, 0.0, torsion])
                    caps = [region.spine_f_max[0], region.spine_f_max[1], region.spine_tau_max]
                    put(spine, [-v for v in caps], caps)
                put(self.at("mz_plus", slice(None), i, c), 0.0, split)
                put(self.at("mz_minus", slice(None), i, c), 0.0, split)
                put(self.at("alpha", slice(None), i, c), 0.0, 0.0 if absent else 1.0)
                gamma = self.at("gamma", slice(None), i, c)
                if split == 0.0:
                    put(gamma, 1.0, 1.0)
                else:
                    put(gamma, 0.0, 1.0)
            for v in range(s.n_obstacles):
                put(self.at("beta", slice(None), i, v), 0.0, 1.0)
        for pin in s.pins:
            if pin.component == "contact" and self.has_finger(pin.finger):
                alpha = self.at("alpha", slice(None), pin.finger, s.region_index(pin.region))
                put(alpha, pin.value, pin.value)

    def pack(self, traj: TrajectoryVariables, disc: Optional[DiscreteVariables] = None) -> np.ndarray:
        """Flatten the trajectory entries covered by this layout."""
        vec = np.zeros(self.n)
        fingers = list(self.fingers)
        limbs = list(self.limbs)
        for family, attr in TRAJECTORY_FIELDS.items():
            if family not in self.tables:
                continue
            values = getattr(traj, attr)
            if family in FINGER_FAMILIES:
                values = values[:, fingers]
            elif family == "d":
                values = values[:, limbs]
            vec[self.tables[family]] = values
        if disc is not None and self.contacts:
            for family in BINARY_FAMILIES:
                vec[self.tables[family]] = getattr(disc, family)[:, fingers]
        return vec

    def unpack_into(self, vec: np.ndarray, traj: TrajectoryVariables, disc: Optional[DiscreteVariables] = None):
        """Write the entries covered by this layout into traj and disc."""
        fingers = list(self.fingers)
        limbs = list(self.limbs)
        for family, attr in TRAJECTORY_FIELDS.items():
            if family not in self.tables:
                continue
            target = getattr(traj, attr)
            values = vec[self.tables[family]]
            if family in FINGER_FAMILIES:
                target[:, fingers] = values
            elif family == "d":
                target[:, limbs] = values
            else:
                target[...] = values
        if disc is not None and self.contacts:
            for family in BINARY_FAMILIES:
                getattr(disc, family)[:, fingers] = np.rint(vec[self.tables[family]]).astype(np.int8)

    def unpack(self, vec: np.ndarray) -> Tuple[TrajectoryVariables, DiscreteVariables]:
        traj = TrajectoryVariables.for_scenario(self.scenario)
        disc = DiscreteVariables.for_scenario(self.scenario)
        self.unpack_into(vec, traj, disc)
        return traj, disc
