"""
Consensus bookkeeping for ADMM: the bipartite graph between global and
block-local variables, the iterate state, projection, dual update and the
grouped residual history.
"""

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np


logger = logging.getLogger(__name__)

RESIDUAL_GROUPS = ("pos", "force", "rot", "moment", "vel")
RESIDUALS_HEADER = ["iter", "res_pos_m", "res_force_N", "res_rot_rad", "res_moment_Nm", "res_dual", "res_vel"]

# Residual group of each consensus family.
FAMILY_GROUPS = {
    "r": "pos", "p": "pos", "d": "pos",
    "theta": "rot", "q": "rot",
    "rdot": "vel", "thetadot": "vel",
    "lambda": "force",
    "tau": "moment",
}


class ConsensusGraph:
    """
    Edges between block-local slots and global variables.

    Every global id carries a label (e.g. 'p[4][2].z') and a residual group.
    """

    def __init__(self, block_names: Sequence[str], rho: Sequence[float]):
        if len(block_names) != len(rho):
            raise ValueError("one rho per block required")
        self.block_names = list(block_names)
        self.rho = np.asarray(rho, dtype=float)
        self.labels: List[str] = []
        self.groups: List[str] = []
        self._index: Dict[str, int] = {}
        self._block: List[int] = []
        self._local: List[int] = []
        self._global: List[int] = []
        self._frozen = None

    @property
    def n_blocks(self) -> int:
        return len(self.block_names)

    @property
    def n_globals(self) -> int:
        return len(self.labels)

    @property
    def n_edges(self) -> int:
        return len(self._block)

    def add_global(self, label: str, group: str) -> int:
        if group not in RESIDUAL_GROUPS:
            raise ValueError(f"unknown residual group '{group}'")
        if label in self._index:
            return self._index[label]
        self._index[label] = len(self.labels)
        self.labels.append(label)
        self.groups.append(group)
        self._frozen = None
        return self._index[label]

    def global_id(self, label: str) -> int:
        return self._index[label]

    def add_edge(self, block: int, local: int, gid: int):
        if not 0 <= block < self.n_blocks or not 0 <= gid < self.n_globals:
            raise ValueError(f"edge ({block}, {local}) -> {gid} out of range")
        self._block.append(block)
        self._local.append(int(local))
        self._global.append(gid)
        self._frozen = None

    def _arrays(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        if self._frozen is None:
            self._frozen = (np.array(self._block, dtype=np.int64), np.array(self._local, dtype=np.int64),
                            np.array(self._global, dtype=np.int64))
        return self._frozen

    @property
    def edge_block(self) -> np.ndarray:
        return self._arrays()[0]

    @property
    def edge_local(self) -> np.ndarray:
        return self._arrays()[1]

    @property
    def edge_global(self) -> np.ndarray:
        return self._arrays()[2]

    @property
    def edge_rho(self) -> np.ndarray:
        return self.rho[self.edge_block]

    def block_edges(self, block: int) -> np.ndarray:
        """Edge numbers of one block, in insertion order."""
        return np.flatnonzero(self.edge_block == block)

    def neighbors(self, gid: int) -> List[Tuple[int, int]]:
        """(block, local slot) pairs tied to a global id."""
        edges = np.flatnonzero(self.edge_global == gid)
        return [(int(self.edge_block[e]), int(self.edge_local[e])) for e in edges]

    def edge_groups(self) -> np.ndarray:
        groups = np.array(self.groups, dtype=object)
        return groups[self.edge_global] if self.n_edges else np.zeros(0, dtype=object)

    def validate(self, block_sizes: Sequence[int]):
        """
        Raises:
            ValueError: If a local slot is outside its block or a global id has no edge
        """
        if len(block_sizes) != self.n_blocks:
            raise ValueError("block size list does not match the graph")
        sizes = np.asarray(block_sizes)
        if self.n_edges and np.any(self.edge_local >= sizes[self.edge_block]):
            raise ValueError("edge references a local slot outside its block")
        pairs = set(zip(self.edge_block.tolist(), self.edge_local.tolist()))
        if len(pairs) != self.n_edges:
            raise ValueError("a local slot is tied to more than one edge")
        counts = np.bincount(self.edge_global, minlength=self.n_globals)
        if np.any(counts == 0):
            raise ValueError(f"global '{self.labels[int(np.argmin(counts))]}' has no edge")


@dataclass
class ResidualRecord:
    """Grouped residual norms of one ADMM iteration."""

    iteration: int
    pos: float
    force: float
    rot: float
    moment: float
    vel: float
    dual: float

    def row(self) -> List:
        return [self.iteration, self.pos, self.force, self.rot, self.moment, self.dual, self.vel]

    def converged(self, tol_position: float, tol_force: float) -> bool:
        return self.pos <= tol_position and self.force <= tol_force


@dataclass
class ConsensusState:
    """Local solutions per edge, duals per edge, global values and history."""

    eta: np.ndarray
    eps: np.ndarray
    delta: np.ndarray
    k: int = 0
    history: List[ResidualRecord] = field(default_factory=list)

    @classmethod
    def initial(cls, graph: ConsensusGraph, delta0: np.ndarray) -> "ConsensusState":
        delta0 = np.asarray(delta0, dtype=float)
        if delta0.size != graph.n_globals:
            raise ValueError(f"delta0 has {delta0.size} entries, graph has {graph.n_globals} globals")
        eta = delta0[graph.edge_global].copy()
        return cls(eta=eta, eps=np.zeros(graph.n_edges), delta=delta0.copy())

    def targets(self, graph: ConsensusGraph) -> np.ndarray:
        """Per-edge value each block is pulled toward: delta - eps."""
        return self.delta[graph.edge_global] - self.eps

    def gather(self, graph: ConsensusGraph, block: int, solution: np.ndarray):
        """Copy a block's local solution into its edges."""
        edges = graph.block_edges(block)
        self.eta[edges] = solution[graph.edge_local[edges]]


def consensus_projection(state: ConsensusState, graph: ConsensusGraph) -> np.ndarray:
    """
    Minimize sum_i rho_i / 2 ||eta_i + eps_i - delta||^2 over delta.

    Per global: delta_g = sum rho_i (eta + eps) / sum rho_i over its edges.
    """
    weights = graph.edge_rho
    numerator = np.bincount(graph.edge_global, weights=weights * (state.eta + state.eps), minlength=graph.n_globals)
    denominator = np.bincount(graph.edge_global, weights=weights, minlength=graph.n_globals)
    state.delta = numerator / denominator
    return state.delta


def dual_update(state: ConsensusState, graph: ConsensusGraph) -> np.ndarray:
    """eps <- eps + eta - delta, per edge."""
    state.eps = state.eps + state.eta - state.delta[graph.edge_global]
    return state.eps


def residual_record(state: ConsensusState, graph: ConsensusGraph, delta_prev: np.ndarray) -> ResidualRecord:
    """Euclidean primal residual per group and the dual residual over all edges."""
    gap = state.eta - state.delta[graph.edge_global]
    groups = graph.edge_groups()
    norms = {name: float(np.sqrt(np.sum(gap[groups == name] ** 2))) for name in RESIDUAL_GROUPS}
    change = graph.edge_rho * (state.delta - delta_prev)[graph.edge_global]
    return ResidualRecord(iteration=state.k, dual=float(np.linalg.norm(change)), **norms)


def write_residuals_csv(history: Sequence[ResidualRecord], path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(RESIDUALS_HEADER)
        for record in history:
            writer.writerow([record.iteration] + [repr(float(v)) for v in record.row()[1:]])
    logger.debug(f"Wrote {len(history)} residual rows to {path}")
    return path
