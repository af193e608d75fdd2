"""
ADMM coordinator: solves every block against the current consensus targets,
projects onto the global variables and updates the duals.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from .config import get_thread_limit
from .consensus import (ConsensusState, ResidualRecord, consensus_projection, dual_update, residual_record,
                        write_residuals_csv)
from .qp_solver import SolveReport, SolveStatus
from .scenario import Scenario
from .splitting import AdmmSplit, Block, SplitMode, build_multi_block_split, build_two_block_split, initial_guess
from .trajectory import DiscreteVariables, TrajectoryVariables


logger = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """A block produced no usable solution."""

    def __init__(self, block: str, iteration: int, message: str):
        self.block = block
        self.iteration = iteration
        super().__init__(f"block '{block}' at ADMM iteration {iteration}: {message}")


@dataclass
class AdmmResult:
    trajectory: TrajectoryVariables
    discrete: DiscreteVariables
    history: List[ResidualRecord]
    reports: List[Dict[str, SolveReport]] = field(default_factory=list)
    split: Optional[AdmmSplit] = None

    @property
    def iterations(self) -> int:
        return len(self.history)

    @property
    def converged_at(self) -> Optional[int]:
        """First iteration whose position and force residuals meet the scenario thresholds."""
        if self.split is None:
            return None
        admm = self.split.blocks[0].scenario.admm
        for record in self.history:
            if record.converged(admm.tol_position, admm.tol_force):
                return record.iteration
        return None

    def __iter__(self):
        yield self.trajectory
        yield self.discrete
        yield self.history


def build_split(s: Scenario, mode: Union[SplitMode, str]) -> AdmmSplit:
    """
    Raises:
        ValueError: If mode is unknown
    """
    mode = SplitMode(mode)
    if mode == SplitMode.TWO_BLOCK:
        return build_two_block_split(s)
    return build_multi_block_split(s)


def _solve_block(block: Block, state: ConsensusState, split: AdmmSplit, index: int, tol: float) -> SolveReport:
    edges = split.graph.block_edges(index)
    targets = state.targets(split.graph)[edges]
    objective = block.objective(targets, state.delta)
    return block.solve(objective, tol)


def _accept(block: Block, report: SolveReport, iteration: int) -> np.ndarray:
    if report.usable:
        if report.status != SolveStatus.OPTIMAL:
            logger.warning(f"Block '{block.name}' returned {report.status.value} at iteration {iteration}, "
                           f"using its best iterate")
        block.last = report
        return report.x
    if block.last is not None and block.last.usable:
        logger.warning(f"Block '{block.name}' returned {report.status.value} at iteration {iteration}, "
                       f"reusing its previous solution")
        return block.last.x
    raise SolverError(block.name, iteration, f"solver returned {report.status.value} without a usable solution")


def _extract(split: AdmmSplit) -> Tuple[TrajectoryVariables, DiscreteVariables]:
    """
    Two-block: the MIQP solution. Multi-block: limb MIQPs for contacts and
    binaries, the NLP block's continuous part on top.
    """
    traj = TrajectoryVariables.for_scenario(split.blocks[0].scenario)
    disc = DiscreteVariables.for_scenario(split.blocks[0].scenario)
    for block in split.miqp_blocks:
        block.layout.unpack_into(block.last.x, traj, disc)
    if split.mode == SplitMode.MULTI_BLOCK:
        nlp = split.nlp_block
        nlp.layout.unpack_into(nlp.last.x, traj)
    return traj, disc


def run_admm(s: Scenario, mode: Union[SplitMode, str] = SplitMode.TWO_BLOCK, iters: Optional[int] = None,
             log_dir: Optional[Path] = None, threads: Optional[int] = None) -> AdmmResult:
    """
    Run consensus ADMM on a scenario.

    Args:
        s: Scenario to plan
        mode: two-block or multi-block
        iters: ADMM iterations (default: s.admm.iterations)
        log_dir: If given, per-solve iteration logs are written there
        threads: Cap on concurrent block solves (default: PATCHPLAN_THREADS, else one per block)

    Returns:
        AdmmResult, iterable as (trajectory, discrete, history)

    Raises:
        SolverError: If a block fails without any usable solution
        ValueError: If iters < 1
    """
    iters = s.admm.iterations if iters is None else iters
    if iters < 1:
        raise ValueError(f"iters must be >= 1, got {iters}")
    split = build_split(s, mode)
    graph = split.graph
    traj0, _ = initial_guess(s)
    state = ConsensusState.initial(graph, split.delta_from(traj0))
    limit = threads or get_thread_limit() or len(split.blocks)
    workers = max(1, min(len(split.blocks), limit))
    reports: List[Dict[str, SolveReport]] = []
    logger.info(f"ADMM {split.mode.value}: {iters} iterations, {len(split.blocks)} blocks, {workers} workers")

    with ThreadPoolExecutor(max_workers=workers) as pool:
        for k in range(1, iters + 1):
            qp_tol, nlp_tol = s.solver.tolerances(k)
            futures = [pool.submit(_solve_block, block, state, split, b, nlp_tol if block.kind == "nlp" else qp_tol)
                       for b, block in enumerate(split.blocks)]
            iteration_reports = {}
            for b, (block, future) in enumerate(zip(split.blocks, futures)):
                report = future.result()
                iteration_reports[block.name] = report
                state.gather(graph, b, _accept(block, report, k))
                if log_dir is not None and report.history:
                    report.write_log(Path(log_dir) / f"solve_{block.name}_{k:03d}.csv")
            reports.append(iteration_reports)

            delta_prev = state.delta.copy()
            consensus_projection(state, graph)
            dual_update(state, graph)
            state.k = k
            record = residual_record(state, graph, delta_prev)
            state.history.append(record)
            logger.info(f"ADMM iteration {k}: pos={record.pos:.4f} m force={record.force:.4f} N "
                        f"rot={record.rot:.4f} rad moment={record.moment:.4f} N*m dual={record.dual:.4f}")
            if s.admm.early_stop and record.converged(s.admm.tol_position, s.admm.tol_force):
                logger.info(f"ADMM converged at iteration {k}")
                break

    traj, disc = _extract(split)
    return AdmmResult(traj, disc, state.history, reports, split)


def write_residuals(result: AdmmResult, path) -> Path:
    return write_residuals_csv(result.history, path)
