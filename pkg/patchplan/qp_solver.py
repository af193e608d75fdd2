"""
Convex QP engine.

Operator splitting over the row form l <= Kx <= u, where K stacks the
general rows and the variable bounds. The KKT matrix is factorized once
per workspace and reused while only q, l and u change (branch-and-bound
nodes, ADMM iterations). Converged iterates are polished on their active
set so that returned solutions meet tight absolute tolerances.
"""

import csv
import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import List, Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .transcription import LinearConstraintSet, QuadraticObjective


logger = logging.getLogger(__name__)

MIN_SCALING = 1e-4
MAX_SCALING = 1e4
RHO_MIN = 1e-6
RHO_MAX = 1e6
INFINITY = 1e20


class SolveStatus(Enum):
    """Outcome of a solve."""

    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    ITERATION_LIMIT = "iteration-limit"
    NODE_LIMIT = "node-limit"
    GAP_UNCERTIFIED = "gap-uncertified"
    NUMERICAL_FAILURE = "numerical-failure"


@dataclass
class SolveReport:
    """Result of one QP, MIQP or NLP solve."""

    status: SolveStatus
    objective: float
    x: Optional[np.ndarray]
    y: Optional[np.ndarray] = None
    primal_residual: float = np.inf
    dual_residual: float = np.inf
    complementarity: float = np.inf
    iterations: int = 0
    nodes: int = 0
    wall_time: float = 0.0
    history: List[dict] = field(default_factory=list)

    @property
    def usable(self) -> bool:
        """Whether x can be used downstream (optimal or best iterate)."""
        return self.x is not None and self.status in (
            SolveStatus.OPTIMAL, SolveStatus.ITERATION_LIMIT, SolveStatus.NODE_LIMIT,
            SolveStatus.GAP_UNCERTIFIED)

    def summary(self) -> str:
        return (f"{self.status.value}: obj={self.objective:.6g} prim={self.primal_residual:.2e} "
                f"dual={self.dual_residual:.2e} it={self.iterations} nodes={self.nodes} "
                f"t={self.wall_time:.2f}s")

    def write_log(self, path) -> Path:
        """Write the iteration history as CSV."""
        path = Path(path)
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["iter", "objective", "primal_residual", "dual_residual"])
            for row in self.history:
                writer.writerow([row["iter"], repr(float(row["objective"])),
                                 repr(float(row["primal_residual"])), repr(float(row["dual_residual"]))])
        return path


@dataclass
class QpProblem:
    """minimize 0.5 x'Px + q'x + constant  s.t.  l <= Ax <= u, lb <= x <= ub."""

    P: sp.csc_matrix
    q: np.ndarray
    A: sp.csr_matrix
    l: np.ndarray
    u: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    x0: Optional[np.ndarray] = None
    y0: Optional[np.ndarray] = None
    constant: float = 0.0
    name: str = ""

    def __post_init__(self):
        self.P = sp.csc_matrix(self.P, dtype=float)
        self.A = sp.csr_matrix(self.A, dtype=float)
        self.q = np.asarray(self.q, dtype=float)
        self.l = np.asarray(self.l, dtype=float)
        self.u = np.asarray(self.u, dtype=float)
        self.lb = np.asarray(self.lb, dtype=float)
        self.ub = np.asarray(self.ub, dtype=float)

    @classmethod
    def from_sets(cls, objective: QuadraticObjective, constraints: LinearConstraintSet,
                  lb: np.ndarray, ub: np.ndarray, x0: Optional[np.ndarray] = None, name: str = "") -> "QpProblem":
        return cls(objective.P, objective.q, constraints.A, constraints.lower, constraints.upper,
                   lb, ub, x0=x0, constant=objective.constant, name=name or constraints.name)

    @property
    def n(self) -> int:
        return self.q.size

    @property
    def m(self) -> int:
        return self.A.shape[0]

    def objective_value(self, x: np.ndarray) -> float:
        return float(0.5 * x @ (self.P @ x) + self.q @ x + self.constant)

    def check(self, psd: bool = False):
        """
        Validate dimensions and bounds.

        Raises:
            ValueError: If shapes disagree, bounds cross or P is not PSD
        """
        n = self.n
        if self.P.shape != (n, n) or self.A.shape[1] != n or self.lb.size != n or self.ub.size != n:
            raise ValueError(f"QP '{self.name}': inconsistent dimensions")
        if self.l.size != self.m or self.u.size != self.m:
            raise ValueError(f"QP '{self.name}': row bounds do not match A")
        if np.any(self.l > self.u) or np.any(self.lb > self.ub):
            raise ValueError(f"QP '{self.name}': lower bound above upper bound")
        if psd and n:
            sym = 0.5 * (self.P + self.P.T)
            if float(np.min(np.linalg.eigvalsh(sym.toarray()))) < -1e-9 * max(1.0, abs(sym).max()):
                raise ValueError(f"QP '{self.name}': objective is not convex")


@dataclass
class QpSettings:
    """Operator-splitting parameters."""

    sigma: float = 1e-6
    rho: float = 0.1
    rho_eq_scale: float = 1e3
    alpha: float = 1.6
    max_iter: int = 4000
    scaling_iter: int = 10
    check_every: int = 25
    adaptive_rho: bool = True
    adaptive_rho_tolerance: float = 5.0
    polish: bool = True
    polish_delta: float = 1e-9
    polish_refine: int = 5
    polish_start: float = 1e-3
    eps_infeasible: float = 1e-5


def _col_norms(M: sp.spmatrix) -> np.ndarray:
    if M.shape[0] == 0 or M.nnz == 0:
        return np.zeros(M.shape[1])
    return np.asarray(abs(M).max(axis=0).todense()).ravel()


def _row_norms(M: sp.spmatrix) -> np.ndarray:
    if M.shape[1] == 0 or M.nnz == 0:
        return np.zeros(M.shape[0])
    return np.asarray(abs(M).max(axis=1).todense()).ravel()


def _limit(v: np.ndarray) -> np.ndarray:
    v = np.where(v < MIN_SCALING, 1.0, v)
    return np.minimum(v, MAX_SCALING)


def _inf_norm(v: np.ndarray) -> float:
    return float(np.max(np.abs(v))) if v.size else 0.0


class QpWorkspace:
    """
    Scaled problem data and KKT factorization for a fixed P and A.

    Only q, l, u, lb and ub may change between solves.
    """

    def __init__(self, problem: QpProblem, settings: Optional[QpSettings] = None):
        problem.check()
        self.settings = settings or QpSettings()
        self.n = problem.n
        self.P0 = problem.P
        self.A0 = problem.A
        self.P = (0.5 * (problem.P + problem.P.T)).tocsc()
        self.K = sp.vstack([problem.A, sp.identity(self.n, format="csr")]).tocsc()
        self.m = self.K.shape[0]
        self._scale(problem.q)
        self.update(problem.q, problem.l, problem.u, problem.lb, problem.ub, problem.constant)
        self.rho0 = self._rho_vector(self.settings.rho)
        self.rho = self.rho0.copy()
        self._factor()

    def _scale(self, q: np.ndarray):
        """Ruiz equilibration of [P K'; K 0] followed by cost scaling."""
        D = np.ones(self.n)
        E = np.ones(self.m)
        c = 1.0
        Ps, Ks, qs = self.P.copy(), self.K.copy(), q.copy()
        for _ in range(self.settings.scaling_iter):
            dx = 1.0 / np.sqrt(_limit(np.maximum(_col_norms(Ps), _col_norms(Ks))))
            dz = 1.0 / np.sqrt(_limit(_row_norms(Ks)))
            Dx, Ez = sp.diags(dx), sp.diags(dz)
            Ps = (Dx @ Ps @ Dx).tocsc()
            Ks = (Ez @ Ks @ Dx).tocsc()
            qs = dx * qs
            D *= dx
            E *= dz
            mean_col = float(np.mean(_col_norms(Ps))) if self.n else 0.0
            gamma = 1.0 / float(_limit(np.array([max(mean_col, _inf_norm(qs))]))[0])
            Ps = Ps * gamma
            qs = qs * gamma
            c *= gamma
        self.D, self.E, self.c = D, E, c
        self.Ps, self.Ks = Ps, Ks
        self.Ks_T = Ks.T.tocsc()

    def matches(self, problem: QpProblem) -> bool:
        """Whether problem shares this workspace's P and A."""
        if problem.P is self.P0 and problem.A is self.A0:
            return True
        if problem.P.shape != self.P0.shape or problem.A.shape != self.A0.shape:
            return False
        return (problem.P != self.P0).nnz == 0 and (problem.A != self.A0).nnz == 0

    def update(self, q=None, l=None, u=None, lb=None, ub=None, constant: Optional[float] = None):
        if q is not None:
            self.q = np.asarray(q, dtype=float).copy()
            self.qs = self.c * self.D * self.q
        if constant is not None:
            self.constant = float(constant)
        if l is not None or lb is not None:
            lo = np.concatenate([l if l is not None else self.lo[:self.m - self.n],
                                 lb if lb is not None else self.lo[self.m - self.n:]])
            self.lo = lo.astype(float)
        if u is not None or ub is not None:
            hi = np.concatenate([u if u is not None else self.hi[:self.m - self.n],
                                 ub if ub is not None else self.hi[self.m - self.n:]])
            self.hi = hi.astype(float)
        if hasattr(self, "lo") and hasattr(self, "hi"):
            if np.any(self.lo > self.hi):
                raise ValueError("lower bound above upper bound")
            self.los = np.clip(self.E * self.lo, -INFINITY, INFINITY)
            self.his = np.clip(self.E * self.hi, -INFINITY, INFINITY)

    def _rho_vector(self, rho: float) -> np.ndarray:
        vec = np.full(self.m, rho)
        free = (self.lo <= -INFINITY) & (self.hi >= INFINITY)
        equality = np.abs(self.hi - self.lo) < 1e-12
        vec[equality] = self.settings.rho_eq_scale * rho
        vec[free] = RHO_MIN
        return vec

    def _factor(self):
        sigma = self.settings.sigma
        kkt = sp.bmat([[self.Ps + sigma * sp.identity(self.n), self.Ks_T],
                       [self.Ks, -sp.diags(1.0 / self.rho)]], format="csc")
        self.lu = splu(kkt)

    def _unscale(self, xs, zs, ys):
        return self.D * xs, zs / self.E, self.E * ys / self.c

    def residuals(self, x: np.ndarray, y: np.ndarray):
        """Unscaled (bound violation, stationarity, complementarity) of a primal-dual pair."""
        Kx = self.K @ x
        violation = np.maximum(0.0, np.maximum(self.lo - Kx, Kx - self.hi))
        dual = self.P @ x + self.q + self.K.T @ y
        with np.errstate(invalid="ignore"):
            gap = np.where(y > 0, self.hi - Kx, np.where(y < 0, Kx - self.lo, 0.0))
            comp = np.abs(y) * np.abs(np.where(y == 0, 0.0, gap))
        comp = np.nan_to_num(comp, nan=np.inf)
        return _inf_norm(violation), _inf_norm(dual), _inf_norm(comp)

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ (self.P @ x) + self.q @ x + self.constant)

    def _polish(self, x: np.ndarray, z: np.ndarray, y: np.ndarray, tol: float):
        """Solve the equality QP on the guessed active set; None if rejected."""
        s = self.settings
        equality = (self.hi - self.lo) < 1e-12
        low = ((z - self.lo) < -y) | equality
        upp = ((self.hi - z) < y) & ~low
        active = np.flatnonzero(low | upp)
        Ka = self.K[active]
        target = np.where(low[active], self.lo[active], self.hi[active])
        k = active.size
        exact = sp.bmat([[self.P, Ka.T], [Ka, sp.csc_matrix((k, k))]], format="csc")
        reg = sp.bmat([[self.P + s.polish_delta * sp.identity(self.n), Ka.T],
                       [Ka, -s.polish_delta * sp.identity(k)]], format="csc")
        rhs = np.concatenate([-self.q, target])
        try:
            lu = splu(reg)
            sol = lu.solve(rhs)
            for _ in range(s.polish_refine):
                sol = sol + lu.solve(rhs - exact @ sol)
        except RuntimeError as e:
            logger.debug(f"Polish factorization failed: {e}")
            return None
        if not np.all(np.isfinite(sol)):
            return None
        xp = sol[:self.n]
        yp = np.zeros(self.m)
        yp[active] = sol[self.n:]
        equality = equality[active]
        wrong_sign = (~equality) & ((low[active] & (yp[active] > tol)) | (upp[active] & (yp[active] < -tol)))
        if np.any(wrong_sign):
            return None
        # Clean round-off on sign-constrained multipliers.
        yp[active] = np.where(low[active] & ~equality, np.minimum(yp[active], 0.0), yp[active])
        yp[active] = np.where(upp[active] & ~equality, np.maximum(yp[active], 0.0), yp[active])
        prim, dual, comp = self.residuals(xp, yp)
        if prim <= tol and dual <= tol and comp <= tol:
            return xp, yp, (prim, dual, comp)
        logger.debug(f"Polish rejected: prim={prim:.2e} dual={dual:.2e} comp={comp:.2e}")
        return None

    def _infeasible(self, dy_scaled: np.ndarray) -> bool:
        dy = self.E * dy_scaled / self.c
        dy = np.where(self.hi >= INFINITY, np.minimum(dy, 0.0), dy)
        dy = np.where(self.lo <= -INFINITY, np.maximum(dy, 0.0), dy)
        norm = _inf_norm(dy)
        if norm < 1e-12:
            return False
        eps = self.settings.eps_infeasible
        if _inf_norm(self.K.T @ dy) > eps * norm:
            return False
        hi = np.where(dy > 0, self.hi, 0.0)
        lo = np.where(dy < 0, self.lo, 0.0)
        support = float(hi @ np.maximum(dy, 0.0) + lo @ np.minimum(dy, 0.0))
        return support < -eps * norm

    def _reset_rho(self):
        if not np.array_equal(self.rho, self.rho0):
            self.rho = self.rho0.copy()
            self._factor()

    def solve(self, tol: float = 1e-6, x0: Optional[np.ndarray] = None, y0: Optional[np.ndarray] = None,
              max_iter: Optional[int] = None) -> SolveReport:
        start = time.perf_counter()
        s = self.settings
        max_iter = s.max_iter if max_iter is None else max_iter
        self._reset_rho()
        n = self.n
        xs = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float) / self.D
        ys = np.zeros(self.m) if y0 is None or y0.size != self.m else self.c * np.asarray(y0, dtype=float) / self.E
        zs = np.clip(self.Ks @ xs, self.los, self.his)
        history = []
        status = SolveStatus.ITERATION_LIMIT
        polished = None
        last_active = None
        iteration = 0
        for iteration in range(1, max_iter + 1):
            ys_prev = ys
            rhs = np.concatenate([s.sigma * xs - self.qs, zs - ys / self.rho])
            sol = self.lu.solve(rhs)
            xt = sol[:n]
            zt = zs + (sol[n:] - ys) / self.rho
            xs = s.alpha * xt + (1.0 - s.alpha) * xs
            z_relax = s.alpha * zt + (1.0 - s.alpha) * zs
            zs = np.clip(z_relax + ys / self.rho, self.los, self.his)
            ys = ys + self.rho * (z_relax - zs)

            if iteration % s.check_every and iteration != max_iter:
                continue
            if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
                status = SolveStatus.NUMERICAL_FAILURE
                break
            x, z, y = self._unscale(xs, zs, ys)
            Kx = self.K @ x
            r_prim = _inf_norm(Kx - z)
            r_dual = _inf_norm(self.P @ x + self.q + self.K.T @ y)
            history.append({"iter": iteration, "objective": self.objective(x),
                            "primal_residual": r_prim, "dual_residual": r_dual})
            if self._infeasible(ys - ys_prev):
                status = SolveStatus.INFEASIBLE
                break
            prim_scale = max(_inf_norm(Kx), _inf_norm(z), 1.0)
            dual_scale = max(_inf_norm(self.P @ x), _inf_norm(self.q), 1.0)
            near = r_prim <= s.polish_start * prim_scale and r_dual <= s.polish_start * dual_scale
            if s.polish and (near or iteration == max_iter):
                active = ((z - self.lo) < -y) | ((self.hi - z) < y)
                if last_active is None or not np.array_equal(active, last_active):
                    last_active = active
                    polished = self._polish(x, z, y, tol)
                    if polished is not None:
                        status = SolveStatus.OPTIMAL
                        break
            if r_prim <= tol and r_dual <= tol:
                prim, dual, comp = self.residuals(x, y)
                if prim <= tol and dual <= tol and comp <= tol:
                    polished = (x, y, (prim, dual, comp))
                    status = SolveStatus.OPTIMAL
                    break
            if s.adaptive_rho:
                self._adapt_rho(xs, zs, ys)

        if polished is not None:
            x, y, (prim, dual, comp) = polished
        else:
            x, _, y = self._unscale(xs, zs, ys)
            prim, dual, comp = self.residuals(x, y)
        report = SolveReport(
            status=status,
            objective=self.objective(x),
            x=x,
            y=y,
            primal_residual=prim,
            dual_residual=dual,
            complementarity=comp,
            iterations=iteration,
            wall_time=time.perf_counter() - start,
            history=history,
        )
        logger.debug(f"QP {report.summary()}")
        return report

    def _adapt_rho(self, xs: np.ndarray, zs: np.ndarray, ys: np.ndarray):
        Kx = self.Ks @ xs
        r_prim = _inf_norm(Kx - zs) / max(_inf_norm(Kx), _inf_norm(zs), 1e-10)
        Px = self.Ps @ xs
        Ky = self.Ks_T @ ys
        r_dual = _inf_norm(Px + self.qs + Ky) / max(_inf_norm(Px), _inf_norm(Ky), _inf_norm(self.qs), 1e-10)
        base = self.rho[self.rho > RHO_MIN]
        if base.size == 0 or r_dual <= 0.0:
            return
        current = float(np.min(base))
        proposed = float(np.clip(current * np.sqrt(r_prim / r_dual), RHO_MIN, RHO_MAX))
        tolerance = self.settings.adaptive_rho_tolerance
        if proposed > tolerance * current or proposed < current / tolerance:
            self.rho = np.where(self.rho > RHO_MIN, self.rho * (proposed / current), self.rho)
            self._factor()


def solve_qp(problem: QpProblem, tol: float = 1e-6, workspace: Optional[QpWorkspace] = None,
             settings: Optional[QpSettings] = None, max_iter: Optional[int] = None) -> SolveReport:
    """
    Solve a convex QP.

    Args:
        problem: The QP
        tol: Absolute tolerance on bound violation, stationarity and complementarity
        workspace: Factorization to reuse when P and A are unchanged
        settings: Solver parameters for a new workspace
        max_iter: Override of the iteration limit

    Returns:
        SolveReport; x is the polished solution when status is optimal
    """
    problem.check()
    if problem.n == 0:
        return SolveReport(SolveStatus.OPTIMAL, problem.constant, np.zeros(0), np.zeros(problem.m),
                           0.0, 0.0, 0.0)
    try:
        if workspace is None or not workspace.matches(problem):
            workspace = QpWorkspace(problem, settings)
        else:
            workspace.update(problem.q, problem.l, problem.u, problem.lb, problem.ub, problem.constant)
    except RuntimeError as e:
        logger.warning(f"QP '{problem.name}' factorization failed: {e}")
        return SolveReport(SolveStatus.NUMERICAL_FAILURE, np.nan, problem.x0)
    return workspace.solve(tol, problem.x0, problem.y0, max_iter)
