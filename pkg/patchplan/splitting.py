"""Optimization blocks and the consensus splits that tie them together."""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from typing import Iterator, List, Optional, Tuple

import numpy as np
import scipy.sparse as sp

from .consensus import FAMILY_GROUPS, ConsensusGraph
from .layout import VariableLayout
from .miqp_solver import MiqpProblem, solve_miqp
from .nlp_solver import NlpProblem, solve_nlp
from .qp_solver import QpProblem, QpSettings, QpWorkspace, SolveReport
from .scenario import BODY_FAMILIES, Scenario
from .smooth_constraints import build_smooth_dynamics
from .trajectory import DiscreteVariables, TrajectoryVariables
from .transcription import QuadraticObjective, build_cost, build_miqp_constraints, build_nlp_linear_constraints


logger = logging.getLogger(__name__)

JACOBIAN_SAMPLE = 30


class SplitMode(Enum):
    """ADMM decompositions."""

    TWO_BLOCK = "two-block"
    MULTI_BLOCK = "multi-block"


class Block(ABC):
    """One ADMM subproblem: its layout, cost, bounds and consensus penalty."""

    kind = ""

    def __init__(self, name: str, scenario: Scenario, layout: VariableLayout, rho: float):
        self.name = name
        self.scenario = scenario
        self.layout = layout
        self.rho = rho
        self.cost = build_cost(scenario, layout)
        self.lb, self.ub = layout.bounds()
        self.local = np.zeros(0, dtype=np.int64)
        self.slack_slots = np.zeros((0, 3), dtype=np.int64)
        self.slack_globals: List[List[List[int]]] = []
        self.P = self.cost.P
        self.start = np.clip(np.zeros(layout.n), self.lb, self.ub)
        self.last: Optional[SolveReport] = None

    @property
    def n(self) -> int:
        return self.layout.n

    def attach(self, local: np.ndarray):
        """Fix the consensus slots; the penalty Hessian is built once here."""
        self.local = np.asarray(local, dtype=np.int64)
        diagonal = np.zeros(self.n)
        diagonal[self.local] += self.rho
        diagonal[self.slack_slots.reshape(-1)] += self.rho
        self.P = (self.cost.P + sp.diags(diagonal)).tocsc()

    def set_start(self, traj: TrajectoryVariables, disc: Optional[DiscreteVariables] = None):
        self.start = np.clip(self.layout.pack(traj, disc), self.lb, self.ub)

    def objective(self, targets: np.ndarray, delta: np.ndarray) -> QuadraticObjective:
        """
        Block cost plus rho/2 ||eta - target||^2 over the consensus slots.

        Limb slacks are pulled toward the other limbs' global lambda.
        """
        q = self.cost.q.copy()
        q[self.local] -= self.rho * targets
        constant = self.cost.constant + 0.5 * self.rho * float(targets @ targets)
        for t, per_axis in enumerate(self.slack_globals):
            for k, gids in enumerate(per_axis):
                target = float(np.sum(delta[gids])) if gids else 0.0
                q[self.slack_slots[t, k]] -= self.rho * target
                constant += 0.5 * self.rho * target * target
        return QuadraticObjective(self.P, q, constant, name=f"{self.name}")

    def starting_point(self) -> np.ndarray:
        if self.last is not None and self.last.usable:
            return self.last.x
        return self.start

    @abstractmethod
    def solve(self, objective: QuadraticObjective, tol: float) -> SolveReport:
        """Solve the block against the current consensus targets."""
        pass


class MiqpBlock(Block):
    """Mixed-integer block: linearized model, contact logic and all binaries."""

    kind = "miqp"

    def __init__(self, name: str, scenario: Scenario, layout: VariableLayout, rho: float):
        super().__init__(name, scenario, layout, rho)
        self.constraints = build_miqp_constraints(scenario, layout)
        self.workspace: Optional[QpWorkspace] = None
        self.hint: Optional[np.ndarray] = None

    @property
    def binaries(self) -> np.ndarray:
        return self.constraints.binaries

    def problem(self, objective: QuadraticObjective) -> MiqpProblem:
        qp = QpProblem(objective.P, objective.q, self.constraints.A, self.constraints.lower,
                       self.constraints.upper, self.lb, self.ub, x0=self.starting_point(),
                       constant=objective.constant, name=self.name)
        return MiqpProblem(qp, self.constraints.binaries, self.constraints.links)

    def solve(self, objective: QuadraticObjective, tol: float) -> SolveReport:
        settings = self.scenario.solver
        problem = self.problem(objective)
        if self.workspace is None:
            self.workspace = QpWorkspace(problem.qp, QpSettings(max_iter=settings.qp_max_iter))
        report = solve_miqp(problem, tol=tol, gap=settings.miqp_gap, node_limit=settings.node_limit,
                            workspace=self.workspace, hint=self.hint)
        if report.usable:
            self.hint = report.x[self.binaries]
        return report


class NlpBlock(Block):
    """Smooth block: full centroidal dynamics and exact kinematics, no contact variables."""

    kind = "nlp"

    def __init__(self, name: str, scenario: Scenario, layout: VariableLayout, rho: float):
        super().__init__(name, scenario, layout, rho)
        self.smooth = build_smooth_dynamics(scenario, layout)
        self.linear = build_nlp_linear_constraints(scenario, layout)

    def check_jacobians(self) -> float:
        """Finite-difference check of the smooth Jacobians on a sample of columns."""
        columns = np.unique(np.concatenate([r.columns for r in self.smooth.residuals]))
        sample = columns[:: max(1, columns.size // JACOBIAN_SAMPLE)]
        error = self.smooth.check_jacobians(self.start, columns=sample)
        logger.debug(f"Block '{self.name}': Jacobian check error {error:.2e}")
        return error

    def solve(self, objective: QuadraticObjective, tol: float) -> SolveReport:
        settings = self.scenario.solver
        problem = NlpProblem(objective, self.smooth, self.linear, self.lb, self.ub,
                             np.clip(self.starting_point(), self.lb, self.ub), name=self.name)
        return solve_nlp(problem, tol=tol, max_iter=settings.nlp_max_iter)


def create_block(kind: str, name: str, scenario: Scenario, layout: VariableLayout, rho: float) -> Block:
    """
    Factory function for ADMM blocks.

    Raises:
        ValueError: If kind is unknown
    """
    if kind == "miqp":
        return MiqpBlock(name, scenario, layout, rho)
    elif kind == "nlp":
        return NlpBlock(name, scenario, layout, rho)
    else:
        raise ValueError(f"Unknown block kind: {kind}")


@dataclass
class AdmmSplit:
    """Blocks, their consensus graph and the layout that indexes global values."""

    mode: SplitMode
    blocks: List[Block]
    graph: ConsensusGraph
    global_layout: VariableLayout
    global_slots: np.ndarray

    @property
    def miqp_blocks(self) -> List[MiqpBlock]:
        return [b for b in self.blocks if isinstance(b, MiqpBlock)]

    @property
    def nlp_block(self) -> NlpBlock:
        return next(b for b in self.blocks if isinstance(b, NlpBlock))

    def delta_from(self, traj: TrajectoryVariables) -> np.ndarray:
        return self.global_layout.pack(traj)[self.global_slots]

    def trajectory_from(self, delta: np.ndarray) -> TrajectoryVariables:
        vec = np.zeros(self.global_layout.n)
        vec[self.global_slots] = delta
        traj, _ = self.global_layout.unpack(vec)
        return traj


def consensus_slots(s: Scenario) -> Iterator[Tuple[str, int, tuple]]:
    """
    (family, t, key) of every consensus variable group: x_t for t = 0..N and
    u_t for t = 0..N-1, never contact wrenches or binaries.

    Point-contact robots skip absent fingers, orientations, moments and d.
    """
    robot = s.robot
    point = robot.point_contact
    N = s.horizon
    for t in range(N + 1):
        for family in BODY_FAMILIES:
            yield family, t, ()
        for i in robot.active_fingers:
            yield "p", t, (i,)
        if not point:
            for i in robot.active_fingers:
                yield "q", t, (i,)
            for l in range(robot.n_limbs):
                yield "d", t, (l,)
        if t == N:
            break
        for i in robot.active_fingers:
            yield "lambda", t, (i,)
        if not point:
            for i in robot.active_fingers:
                yield "tau", t, (i,)


def _label(family: str, t: int, key: tuple, k: int) -> str:
    return f"{family}[{t}]" + "".join(f"[{v}]" for v in key) + f".{'xyz'[k]}"


def _covers(layout: VariableLayout, family: str, key: tuple) -> bool:
    if family == "d":
        return key[0] in layout.limbs
    if key:
        return layout.has_finger(key[0])
    return True


def _build_graph(s: Scenario, blocks: List[Block], global_layout: VariableLayout) -> Tuple[ConsensusGraph, np.ndarray]:
    graph = ConsensusGraph([b.name for b in blocks], [b.rho for b in blocks])
    slots = []
    locals_per_block: List[List[int]] = [[] for _ in blocks]
    for family, t, key in consensus_slots(s):
        for k in range(3):
            gid = graph.add_global(_label(family, t, key, k), FAMILY_GROUPS[family])
            slots.append(int(global_layout.at(family, t, *key)[k]))
            for b, block in enumerate(blocks):
                if _covers(block.layout, family, key):
                    local = int(block.layout.at(family, t, *key)[k])
                    graph.add_edge(b, local, gid)
                    locals_per_block[b].append(local)
    for block, local in zip(blocks, locals_per_block):
        block.attach(np.array(local, dtype=np.int64))
    graph.validate([b.n for b in blocks])
    return graph, np.array(slots, dtype=np.int64)


def initial_guess(s: Scenario) -> Tuple[TrajectoryVariables, DiscreteVariables]:
    """
    Straight-line body motion from the initial to the target state with the
    fingers at their nominal offsets and the weight shared evenly.
    """
    N, dt = s.horizon, s.dt
    traj = TrajectoryVariables.for_scenario(s)
    start, goal = s.body_state("initial"), s.body_state("target")
    for t in range(N + 1):
        w = t / N
        traj.r[t] = (1.0 - w) * start["r"] + w * goal["r"]
        traj.theta[t] = (1.0 - w) * start["theta"] + w * goal["theta"]
        traj.rdot[t] = (goal["r"] - start["r"]) / (N * dt)
        traj.thetadot[t] = (goal["theta"] - start["theta"]) / (N * dt)
        traj.p[t], traj.q[t] = s.nominal_fingers(traj.r[t], traj.theta[t])
    traj.p[0], traj.q[0] = s.initial_fingers()
    for key, attr in (("rdot", traj.rdot), ("thetadot", traj.thetadot)):
        attr[0] = start[key]
        attr[N] = goal[key]
    for l in range(s.robot.n_limbs):
        first, second = s.robot.limb_fingers(l)
        traj.d[:, l] = traj.p[:, second] - traj.p[:, first]
    active = list(s.robot.active_fingers)
    if active:
        traj.lam[:, active] = -s.robot.mass * s.robot.gravity / len(active)
    return traj, DiscreteVariables.for_scenario(s)


def _finish(s: Scenario, mode: SplitMode, blocks: List[Block]) -> AdmmSplit:
    global_layout = VariableLayout(s, contacts=False, name="global")
    graph, slots = _build_graph(s, blocks, global_layout)
    traj0, disc0 = initial_guess(s)
    for block in blocks:
        block.set_start(traj0, disc0)
    split = AdmmSplit(mode, blocks, graph, global_layout, slots)
    nlp = split.nlp_block
    nlp.check_jacobians()
    logger.info(f"Split {mode.value}: {len(blocks)} blocks, {graph.n_globals} globals, {graph.n_edges} edges")
    return split


def build_two_block_split(s: Scenario) -> AdmmSplit:
    """MIQP block (linearized model, all binaries) + NLP block (full dynamics)."""
    miqp = create_block("miqp", "miqp", s, VariableLayout(s, name="miqp"), s.admm.rho_for("miqp"))
    nlp = create_block("nlp", "nlp", s, VariableLayout(s, contacts=False, name="nlp"), s.admm.rho_for("nlp"))
    return _finish(s, SplitMode.TWO_BLOCK, [miqp, nlp])


def build_multi_block_split(s: Scenario) -> AdmmSplit:
    """
    One MIQP per limb plus the NLP block.

    Each limb block carries a full body copy, its own two fingers and a
    per-step force slack standing in for the other limbs; the slack is
    pulled toward the sum of the other limbs' global lambda.
    """
    robot = s.robot
    if robot.n_limbs < 1:
        raise ValueError("multi-block split needs at least one limb")
    blocks: List[Block] = []
    share = 1.0 / robot.n_limbs
    for l in range(robot.n_limbs):
        name = f"limb{l}"
        layout = VariableLayout(s, fingers=robot.limb_fingers(l), slack=True, name=name, body_share=share)
        block = create_block("miqp", name, s, layout, s.admm.rho_for(name))
        block.slack_slots = layout.tables["slack"]
        blocks.append(block)
    blocks.append(create_block("nlp", "nlp", s, VariableLayout(s, contacts=False, name="nlp"), s.admm.rho_for("nlp")))
    split = _finish(s, SplitMode.MULTI_BLOCK, blocks)
    for l, block in enumerate(blocks[:-1]):
        others = [i for i in robot.active_fingers if robot.limb_of(i) != l]
        block.slack_globals = [
            [[split.graph.global_id(_label("lambda", t, (i,), k)) for i in others] for k in range(3)]
            for t in range(s.horizon)
        ]
    return split
