"""
Best-first branch and bound over binary variables.

Every node is a QP relaxation solved on one shared workspace, so the KKT
factorization is computed once per MIQP. Branching picks the most
fractional binary (lowest index on ties); a diving heuristic supplies
early incumbents.
"""

import heapq
import itertools
import logging
import time
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .qp_solver import QpProblem, QpSettings, QpWorkspace, SolveReport, SolveStatus
from .transcription import BigMLink, LinearConstraintSet, QuadraticObjective


logger = logging.getLogger(__name__)

INTEGRALITY_TOL = 1e-6
DIVE_FIX_THRESHOLD = 0.1
DIVE_MAX_DEPTH = 60
DIVE_EVERY = 20


@dataclass
class MiqpProblem:
    """A QP plus the indices of its binary variables and their big-M links."""

    qp: QpProblem
    binaries: np.ndarray
    links: List[BigMLink] = field(default_factory=list)

    def __post_init__(self):
        self.binaries = np.unique(np.asarray(self.binaries, dtype=np.int64))

    @classmethod
    def from_sets(cls, objective: QuadraticObjective, constraints: LinearConstraintSet,
                  lb: np.ndarray, ub: np.ndarray, name: str = "") -> "MiqpProblem":
        qp = QpProblem.from_sets(objective, constraints, lb, ub, name=name)
        return cls(qp, constraints.binaries, list(constraints.links))

    def check(self):
        """
        Raises:
            ValueError: If a binary index is outside the layout or its bounds leave [0, 1]
        """
        self.qp.check()
        if self.binaries.size and (self.binaries[0] < 0 or self.binaries[-1] >= self.qp.n):
            raise ValueError(f"MIQP '{self.qp.name}': binary index outside the variable range")
        lb, ub = self.qp.lb[self.binaries], self.qp.ub[self.binaries]
        if np.any(lb < 0.0) or np.any(ub > 1.0):
            raise ValueError(f"MIQP '{self.qp.name}': binary bounds must lie in [0, 1]")

    def is_integral(self, x: np.ndarray, tol: float = INTEGRALITY_TOL) -> bool:
        v = x[self.binaries]
        return bool(np.all(np.abs(v - np.rint(v)) <= tol))

    def link_violation(self, x: np.ndarray) -> float:
        """Largest violation among the big-M linked rows."""
        if not self.links:
            return 0.0
        rows = np.array([link.row for link in self.links])
        ax = self.qp.A[rows] @ x
        return float(np.max(np.maximum(0.0, np.maximum(self.qp.l[rows] - ax, ax - self.qp.u[rows]))))


def _fractionality(values: np.ndarray) -> np.ndarray:
    return np.minimum(values - np.floor(values), np.ceil(values) - values)


class _Search:
    """State of one branch-and-bound run."""

    def __init__(self, problem: MiqpProblem, workspace: QpWorkspace, tol: float, gap: float):
        self.problem = problem
        self.ws = workspace
        self.tol = tol
        self.gap = gap
        self.best_obj = np.inf
        self.best: Optional[SolveReport] = None
        self.unresolved = 0
        self.qp_solves = 0

    def cutoff(self) -> float:
        if not np.isfinite(self.best_obj):
            return np.inf
        return self.best_obj - self.gap * max(1.0, abs(self.best_obj))

    def relax(self, lb: np.ndarray, ub: np.ndarray, x0=None, y0=None) -> SolveReport:
        self.ws.update(lb=lb, ub=ub)
        self.qp_solves += 1
        return self.ws.solve(self.tol, x0, y0)

    def try_fixed(self, lb: np.ndarray, ub: np.ndarray, values: np.ndarray, x0=None, y0=None) -> bool:
        """Solve with every binary fixed to values; keep it if it improves the incumbent."""
        b = self.problem.binaries
        lo, hi = lb.copy(), ub.copy()
        fixed = np.clip(np.rint(values), lo[b], hi[b])
        lo[b] = hi[b] = fixed
        report = self.relax(lo, hi, x0, y0)
        if report.status != SolveStatus.OPTIMAL:
            return False
        report.x[b] = fixed
        report.objective = self.problem.qp.objective_value(report.x)
        if report.objective < self.best_obj:
            self.best_obj = report.objective
            self.best = report
            logger.debug(f"MIQP incumbent {report.objective:.6g}")
            return True
        return False

    def dive(self, lb: np.ndarray, ub: np.ndarray, report: SolveReport):
        """Fix nearly integral binaries in batches until the relaxation is integral."""
        b = self.problem.binaries
        lo, hi = lb.copy(), ub.copy()
        for _ in range(DIVE_MAX_DEPTH):
            values = report.x[b]
            frac = _fractionality(values)
            free = lo[b] < hi[b]
            if np.all(frac[free] <= INTEGRALITY_TOL):
                self.try_fixed(lo, hi, values, report.x, report.y)
                return
            candidates = free & (frac <= DIVE_FIX_THRESHOLD)
            if not np.any(candidates):
                masked = np.where(free & (frac > INTEGRALITY_TOL), frac, np.inf)
                candidates = np.zeros_like(free)
                candidates[int(np.argmin(masked))] = True
            cols = b[candidates]
            lo[cols] = hi[cols] = np.rint(values[candidates])
            report = self.relax(lo, hi, report.x, report.y)
            if report.status != SolveStatus.OPTIMAL or report.objective >= self.cutoff():
                return


def solve_miqp(problem: MiqpProblem, tol: float = 1e-6, gap: float = 1e-6, node_limit: int = 200,
               workspace: Optional[QpWorkspace] = None, hint: Optional[np.ndarray] = None,
               settings: Optional[QpSettings] = None) -> SolveReport:
    """
    Solve a mixed-binary QP by best-first branch and bound.

    Args:
        problem: The MIQP
        tol: Tolerance of every QP relaxation
        gap: Relative optimality gap used for pruning
        node_limit: Maximum number of explored nodes
        workspace: QP workspace to reuse when P and A are unchanged
        hint: Binary values tried first as an incumbent

    Returns:
        SolveReport with integral binaries when an incumbent exists; status is
        optimal, infeasible (all nodes pruned), node-limit, or gap-uncertified
        when a relaxation ended unresolved (numerical-failure without an
        incumbent)
    """
    start = time.perf_counter()
    problem.check()
    qp = problem.qp
    if workspace is None or not workspace.matches(qp):
        workspace = QpWorkspace(qp, settings)
    else:
        workspace.update(qp.q, qp.l, qp.u, qp.lb, qp.ub, qp.constant)
    search = _Search(problem, workspace, tol, gap)
    b = problem.binaries

    if hint is not None and b.size:
        search.try_fixed(qp.lb, qp.ub, np.asarray(hint, dtype=float), qp.x0)

    counter = itertools.count()
    heap: List[Tuple[float, int, np.ndarray, np.ndarray, Optional[np.ndarray], Optional[np.ndarray]]] = []
    heapq.heappush(heap, (-np.inf, next(counter), qp.lb.copy(), qp.ub.copy(), qp.x0, None))
    nodes = 0
    status = SolveStatus.OPTIMAL
    history = []
    while heap:
        bound, _, lb, ub, x0, y0 = heapq.heappop(heap)
        if bound >= search.cutoff():
            continue
        if nodes >= node_limit:
            status = SolveStatus.NODE_LIMIT
            heapq.heappush(heap, (bound, next(counter), lb, ub, x0, y0))
            break
        nodes += 1
        report = search.relax(lb, ub, x0, y0)
        if report.status == SolveStatus.INFEASIBLE:
            continue
        if report.status != SolveStatus.OPTIMAL:
            search.unresolved += 1
            logger.debug(f"MIQP node {nodes}: relaxation {report.status.value}, pruned")
            continue
        history.append({"iter": nodes, "objective": report.objective,
                        "primal_residual": report.primal_residual, "dual_residual": report.dual_residual})
        if report.objective >= search.cutoff():
            continue
        values = report.x[b]
        frac = _fractionality(values)
        if not b.size or np.all(frac <= INTEGRALITY_TOL):
            search.try_fixed(lb, ub, values, report.x, report.y)
            continue
        if search.best is None and (nodes == 1 or nodes % DIVE_EVERY == 0):
            search.dive(lb, ub, report)
        # Most fractional binary; argmax returns the lowest index on ties.
        k = int(np.argmax(frac))
        col = int(b[k])
        down_ub = ub.copy()
        down_ub[col] = 0.0
        up_lb = lb.copy()
        up_lb[col] = 1.0
        children = [(lb, down_ub), (up_lb, ub)]
        if values[k] > 0.5:
            children.reverse()
        for child_lb, child_ub in children:
            heapq.heappush(heap, (report.objective, next(counter), child_lb, child_ub, report.x, report.y))

    if search.unresolved and status == SolveStatus.OPTIMAL:
        # a pruned unresolved node may hold a better point, or the only feasible one
        status = SolveStatus.GAP_UNCERTIFIED if search.best is not None else SolveStatus.NUMERICAL_FAILURE
    if search.best is None:
        if status == SolveStatus.OPTIMAL:
            status = SolveStatus.INFEASIBLE
        result = SolveReport(status, np.inf, None, nodes=nodes)
    else:
        best = search.best
        result = SolveReport(
            status=status,
            objective=best.objective,
            x=best.x,
            y=best.y,
            primal_residual=best.primal_residual,
            dual_residual=best.dual_residual,
            complementarity=best.complementarity,
            iterations=search.qp_solves,
            nodes=nodes,
        )
    if search.unresolved:
        logger.warning(f"MIQP '{qp.name}': {search.unresolved} relaxations unresolved and pruned")
    result.history = history
    result.wall_time = time.perf_counter() - start
    level = logging.DEBUG if status in (SolveStatus.OPTIMAL, SolveStatus.INFEASIBLE) else logging.WARNING
    logger.log(level, f"MIQP '{qp.name}' {result.summary()}")
    return result
