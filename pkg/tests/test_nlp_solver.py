import numpy as np
import pytest
import scipy.sparse as sp

from patchplan.nlp_solver import NlpProblem, solve_nlp
from patchplan.qp_solver import SolveStatus
from patchplan.smooth_constraints import SmoothConstraintSet, SmoothResidual
from patchplan.transcription import LinearConstraintSet, QuadraticObjective


def _circle(lower: float, upper: float) -> SmoothConstraintSet:
    """lower <= x0^2 + x1^2 <= upper."""
    residual = SmoothResidual(
        "circle",
        fun=lambda x: np.array([x[0] ** 2 + x[1] ** 2]),
        jac=lambda x: sp.csr_matrix(np.array([[2.0 * x[0], 2.0 * x[1]]])),
        lower=np.array([lower]),
        upper=np.array([upper]),
        columns=np.array([0, 1]),
    )
    return SmoothConstraintSet(2, [residual])


def _no_rows() -> LinearConstraintSet:
    return LinearConstraintSet(sp.csr_matrix((0, 2)), np.zeros(0), np.zeros(0), [])


def test_linear_objective_on_disc():
    objective = QuadraticObjective(sp.csc_matrix((2, 2)), np.array([1.0, 1.0]))
    problem = NlpProblem(objective, _circle(-np.inf, 2.0), _no_rows(), np.full(2, -5.0), np.full(2, 5.0),
                         np.zeros(2), name="disc")
    report = solve_nlp(problem, tol=1e-7)
    assert report.status == SolveStatus.OPTIMAL
    np.testing.assert_allclose(report.x, [-1.0, -1.0], atol=1e-5)
    assert problem.max_violation(report.x) <= 1e-7


def test_circle_with_linear_row():
    # closest point to (2, 2) on the circle of radius sqrt(2) along x0 = x1
    objective = QuadraticObjective(sp.csc_matrix(2.0 * np.eye(2)), np.array([-4.0, -4.0]), 8.0)
    diagonal = LinearConstraintSet(sp.csr_matrix(np.array([[1.0, -1.0]])), np.zeros(1), np.zeros(1), ["diag"])
    problem = NlpProblem(objective, _circle(2.0, 2.0), diagonal, np.full(2, -5.0), np.full(2, 5.0),
                         np.array([0.3, 0.1]), name="circle")
    report = solve_nlp(problem, tol=1e-7)
    assert report.status == SolveStatus.OPTIMAL
    np.testing.assert_allclose(report.x, [1.0, 1.0], atol=1e-5)
    assert report.objective == pytest.approx(2.0, abs=1e-5)


def test_bounds_active_at_solution():
    objective = QuadraticObjective(sp.csc_matrix((2, 2)), np.array([-1.0, 0.0]))
    problem = NlpProblem(objective, _circle(-np.inf, 10.0), _no_rows(), np.full(2, -1.0), np.full(2, 0.5),
                         np.zeros(2))
    report = solve_nlp(problem, tol=1e-7)
    assert report.x[0] == pytest.approx(0.5, abs=1e-6)


def test_iteration_limit_returns_best_iterate():
    objective = QuadraticObjective(sp.csc_matrix((2, 2)), np.array([1.0, 1.0]))
    problem = NlpProblem(objective, _circle(-np.inf, 2.0), _no_rows(), np.full(2, -5.0), np.full(2, 5.0),
                         np.zeros(2))
    report = solve_nlp(problem, tol=1e-12, max_iter=1)
    assert report.status in (SolveStatus.ITERATION_LIMIT, SolveStatus.OPTIMAL)
    assert report.usable
    assert report.x.shape == (2,)


def test_start_outside_bounds_is_rejected():
    objective = QuadraticObjective(sp.csc_matrix((2, 2)), np.zeros(2))
    problem = NlpProblem(objective, _circle(-np.inf, 2.0), _no_rows(), np.zeros(2), np.ones(2), np.full(2, 3.0))
    with pytest.raises(ValueError, match="outside the variable bounds"):
        solve_nlp(problem)


def test_dimension_mismatch_is_rejected():
    objective = QuadraticObjective(sp.csc_matrix((2, 2)), np.zeros(2))
    rows = LinearConstraintSet(sp.csr_matrix((0, 3)), np.zeros(0), np.zeros(0), [])
    problem = NlpProblem(objective, _circle(-np.inf, 2.0), rows, np.zeros(2), np.ones(2), np.zeros(2))
    with pytest.raises(ValueError, match="inconsistent dimensions"):
        solve_nlp(problem)
