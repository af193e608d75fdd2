"""
Trust-region SQP for the smooth block.

Each iteration solves an elastic QP (l1 penalty on the linearized smooth
rows, linear rows and bounds kept hard) inside an infinity-norm trust
region. Steps are accepted only when the l1 merit decreases.
"""

import logging
import time
from dataclasses import dataclass
from typing import Any, Optional, Tuple

import numpy as np
import scipy.sparse as sp

from .qp_solver import QpProblem, SolveReport, SolveStatus, solve_qp
from .smooth_constraints import SmoothConstraintSet
from .transcription import LinearConstraintSet


logger = logging.getLogger(__name__)


@dataclass
class NlpSettings:
    """Trust-region and penalty parameters."""

    radius: float = 1.0
    max_radius: float = 1e3
    min_radius: float = 1e-12
    penalty: float = 10.0
    max_penalty: float = 1e9
    accept_ratio: float = 1e-4
    shrink_ratio: float = 0.25
    expand_ratio: float = 0.75
    # Lagrangian curvature by finite differences of J'y up to this many variables.
    exact_hessian_limit: int = 200
    fd_step: float = 1e-6
    hessian_shift: float = 1e-8
    qp_max_iter: int = 8000


@dataclass
class NlpProblem:
    """
    minimize f(x)  s.t.  lo <= c(x) <= hi (smooth), l <= Ax <= u, lb <= x <= ub.

    The objective is any object with value, gradient and hessian methods.
    """

    objective: Any
    smooth: SmoothConstraintSet
    linear: LinearConstraintSet
    lb: np.ndarray
    ub: np.ndarray
    x0: np.ndarray
    name: str = ""

    @property
    def n(self) -> int:
        return self.lb.size

    def check(self):
        """
        Raises:
            ValueError: If dimensions disagree or x0 leaves the variable bounds
        """
        n = self.n
        if self.ub.size != n or self.x0.size != n or self.linear.n != n or self.smooth.n != n:
            raise ValueError(f"NLP '{self.name}': inconsistent dimensions")
        if np.any(self.x0 < self.lb - 1e-9) or np.any(self.x0 > self.ub + 1e-9):
            raise ValueError(f"NLP '{self.name}': initial point outside the variable bounds")

    def smooth_violation(self, x: np.ndarray) -> np.ndarray:
        return self.smooth.violation(x)

    def max_violation(self, x: np.ndarray) -> float:
        return max(self.smooth.max_violation(x), self.linear.max_violation(x))


def _hessian(problem: NlpProblem, x: np.ndarray, y_smooth: Optional[np.ndarray], s: NlpSettings) -> sp.csc_matrix:
    """Objective Hessian plus, on small problems, constraint curvature; shifted to be PSD."""
    H = problem.objective.hessian(x)
    H = sp.csc_matrix(H) if not sp.issparse(H) else H.tocsc()
    n = problem.n
    if n > s.exact_hessian_limit:
        return (H + s.hessian_shift * sp.identity(n)).tocsc()
    dense = H.toarray()
    if y_smooth is not None and y_smooth.size and np.any(y_smooth):
        curvature = np.zeros((n, n))
        for j in range(n):
            step = np.zeros(n)
            step[j] = s.fd_step
            up = problem.smooth.jacobian(x + step).T @ y_smooth
            down = problem.smooth.jacobian(x - step).T @ y_smooth
            curvature[:, j] = (up - down) / (2.0 * s.fd_step)
        dense = dense + 0.5 * (curvature + curvature.T)
    low = float(np.min(np.linalg.eigvalsh(0.5 * (dense + dense.T)))) if n else 0.0
    shift = max(0.0, s.hessian_shift - low)
    return sp.csc_matrix(dense + shift * np.eye(n))


def _merit(problem: NlpProblem, x: np.ndarray, penalty: float) -> float:
    return float(problem.objective.value(x) + penalty * np.sum(problem.smooth_violation(x)))


def _project_linear(problem: NlpProblem, tol: float, s: NlpSettings) -> np.ndarray:
    """Closest point to x0 satisfying the linear rows and the bounds."""
    x0 = np.clip(problem.x0, problem.lb, problem.ub)
    if problem.linear.max_violation(x0) <= tol:
        return x0
    n = problem.n
    qp = QpProblem(sp.identity(n, format="csc"), -x0, problem.linear.A, problem.linear.lower,
                   problem.linear.upper, problem.lb, problem.ub, x0=x0, constant=0.5 * float(x0 @ x0),
                   name=f"{problem.name}:projection")
    report = solve_qp(qp, tol=0.1 * tol, max_iter=s.qp_max_iter)
    if not report.usable:
        logger.warning(f"NLP '{problem.name}': projection onto the linear rows {report.status.value}")
        return x0
    return np.clip(report.x, problem.lb, problem.ub)


def _step_qp(problem: NlpProblem, x: np.ndarray, H: sp.csc_matrix, g: np.ndarray, radius: float,
             penalty: float) -> QpProblem:
    """Elastic QP in (d, s+, s-) around x."""
    n = problem.n
    J = problem.smooth.jacobian(x)
    c = problem.smooth.values(x)
    m_c = c.size
    lin = problem.linear
    Ax = lin.A @ x
    lb_d = np.maximum(problem.lb - x, -radius)
    ub_d = np.minimum(problem.ub - x, radius)
    if m_c:
        I = sp.identity(m_c, format="csr")
        P = sp.block_diag([H, sp.csc_matrix((2 * m_c, 2 * m_c))], format="csc")
        q = np.concatenate([g, np.full(2 * m_c, penalty)])
        zeros = sp.csr_matrix((lin.n_rows, 2 * m_c))
        A = sp.vstack([sp.hstack([J, I, -I]), sp.hstack([lin.A, zeros])]).tocsr()
        lb = np.concatenate([lb_d, np.zeros(2 * m_c)])
        ub = np.concatenate([ub_d, np.full(2 * m_c, np.inf)])
    else:
        P, q, A, lb, ub = H, g, lin.A, lb_d, ub_d
    l = np.concatenate([problem.smooth.lower - c, lin.lower - Ax])
    u = np.concatenate([problem.smooth.upper - c, lin.upper - Ax])
    return QpProblem(P, q, A, l, u, lb, ub, name=f"{problem.name}:step")


def _kkt_residual(problem: NlpProblem, x: np.ndarray, y_smooth: np.ndarray, y_linear: np.ndarray,
                  tol: float) -> Tuple[float, float]:
    """Projected stationarity of the Lagrangian and complementarity of the smooth rows."""
    grad = problem.objective.gradient(x)
    if y_smooth.size:
        grad = grad + problem.smooth.jacobian(x).T @ y_smooth
    if y_linear.size:
        grad = grad + problem.linear.A.T @ y_linear
    fixed = problem.ub - problem.lb <= 0.0
    at_lower = x - problem.lb <= tol
    at_upper = problem.ub - x <= tol
    res = np.where(fixed, 0.0,
                   np.where(at_lower, np.maximum(-grad, 0.0),
                            np.where(at_upper, np.maximum(grad, 0.0), np.abs(grad))))
    stationarity = float(np.max(res)) if res.size else 0.0
    comp = 0.0
    if y_smooth.size:
        c = problem.smooth.values(x)
        gap = np.where(y_smooth > 0, problem.smooth.upper - c, problem.smooth.lower - c)
        gap = np.where(y_smooth == 0, 0.0, gap)
        comp = float(np.max(np.abs(y_smooth * gap)))
    return stationarity, comp


def solve_nlp(problem: NlpProblem, tol: float = 1e-6, max_iter: int = 60,
              settings: Optional[NlpSettings] = None) -> SolveReport:
    """
    Solve a smooth NLP to a local KKT point.

    Args:
        problem: The NLP
        tol: Tolerance on stationarity and constraint violation (infinity norm)
        max_iter: SQP iteration limit
        settings: Trust-region parameters

    Returns:
        SolveReport; on iteration-limit x is the best (lowest merit) iterate
    """
    start = time.perf_counter()
    s = settings or NlpSettings()
    problem.check()
    x = _project_linear(problem, tol, s)
    m_c = problem.smooth.values(x).size
    m_a = problem.linear.n_rows
    penalty = max(s.penalty, 10.0 * float(np.max(np.abs(problem.objective.gradient(x)), initial=0.0)))
    penalty = min(penalty, s.max_penalty)
    radius = s.radius
    y_smooth = np.zeros(m_c)
    y_linear = np.zeros(m_a)
    merit = _merit(problem, x, penalty)
    history = []
    status = SolveStatus.ITERATION_LIMIT
    stationarity = comp = np.inf
    iteration = 0
    for iteration in range(1, max_iter + 1):
        g = problem.objective.gradient(x)
        H = _hessian(problem, x, y_smooth, s)
        for _ in range(6):
            qp = _step_qp(problem, x, H, g, radius, penalty)
            report = solve_qp(qp, tol=min(1e-8, 0.1 * tol), max_iter=s.qp_max_iter)
            if not report.usable:
                break
            y_qp = report.y[:m_c]
            slack = float(np.sum(report.x[problem.n:])) if m_c else 0.0
            # Steer the penalty when the elastic multipliers saturate.
            if slack > tol and m_c and float(np.max(np.abs(y_qp))) >= 0.99 * penalty and penalty < s.max_penalty:
                penalty = min(10.0 * penalty, s.max_penalty)
                merit = _merit(problem, x, penalty)
                continue
            break
        if not report.usable:
            logger.warning(f"NLP '{problem.name}': step QP {report.status.value} at iteration {iteration}")
            status = SolveStatus.NUMERICAL_FAILURE if iteration == 1 else SolveStatus.ITERATION_LIMIT
            break
        d = report.x[:problem.n]
        y_smooth = report.y[:m_c].copy()
        y_linear = report.y[m_c:m_c + m_a].copy()

        violation = problem.max_violation(x)
        stationarity, comp = _kkt_residual(problem, x, y_smooth, y_linear, tol)
        if violation <= tol and stationarity <= tol and comp <= tol:
            status = SolveStatus.OPTIMAL
            break

        model_violation = float(np.sum(report.x[problem.n:])) if m_c else 0.0
        predicted = -(g @ d + 0.5 * d @ (H @ d)) + penalty * (np.sum(problem.smooth_violation(x)) - model_violation)
        trial = np.clip(x + d, problem.lb, problem.ub)
        trial_merit = _merit(problem, trial, penalty)
        actual = merit - trial_merit
        step = float(np.max(np.abs(d))) if d.size else 0.0
        if predicted <= 1e-14 * max(1.0, abs(merit)) or step <= 1e-14:
            logger.debug(f"NLP '{problem.name}': no predicted progress at iteration {iteration}")
            radius = 0.5 * radius
            if radius < s.min_radius:
                break
            continue
        ratio = actual / predicted
        accepted = actual > 0.0 and ratio >= s.accept_ratio
        if accepted:
            history.append({"iter": iteration, "objective": float(problem.objective.value(trial)),
                            "merit_before": merit, "merit": trial_merit, "penalty": penalty,
                            "primal_residual": problem.max_violation(trial), "dual_residual": stationarity,
                            "radius": radius})
            x = trial
            merit = trial_merit
            if ratio >= s.expand_ratio and step >= 0.99 * radius:
                radius = min(2.0 * radius, s.max_radius)
        else:
            radius = s.shrink_ratio * step
        if ratio < s.shrink_ratio and accepted:
            radius = s.shrink_ratio * radius
        if radius < s.min_radius:
            logger.debug(f"NLP '{problem.name}': trust region collapsed at iteration {iteration}")
            break

    if status != SolveStatus.OPTIMAL and status != SolveStatus.NUMERICAL_FAILURE:
        stationarity, comp = _kkt_residual(problem, x, y_smooth, y_linear, tol)
        level = logging.WARNING if iteration >= max_iter else logging.DEBUG
        logger.log(level, f"NLP '{problem.name}': stopped after {iteration} iterations, "
                          f"violation {problem.max_violation(x):.2e}, stationarity {stationarity:.2e}")
    result = SolveReport(
        status=status,
        objective=float(problem.objective.value(x)),
        x=x,
        y=np.concatenate([y_smooth, y_linear]),
        primal_residual=problem.max_violation(x),
        dual_residual=stationarity,
        complementarity=comp,
        iterations=iteration,
        wall_time=time.perf_counter() - start,
        history=history,
    )
    logger.debug(f"NLP '{problem.name}' {result.summary()}")
    return result
