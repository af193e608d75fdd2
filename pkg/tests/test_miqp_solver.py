import numpy as np
import pytest
import scipy.sparse as sp

from patchplan.miqp_solver import MiqpProblem, _Search, solve_miqp
from patchplan.qp_solver import QpProblem, QpSettings, SolveStatus
from patchplan.transcription import BigMLink


def _switch(cost_of_switch: float) -> MiqpProblem:
    """(x - 0.8)^2 + cost * b with x <= b: x may only move while b is on."""
    qp = QpProblem(sp.csc_matrix(np.diag([2.0, 0.0])), np.array([-1.6, cost_of_switch]),
                   sp.csr_matrix(np.array([[1.0, -1.0]])), np.array([-np.inf]), np.array([0.0]),
                   np.array([0.0, 0.0]), np.array([1.0, 1.0]), constant=0.64, name="switch")
    return MiqpProblem(qp, [1], [BigMLink(0, (1,), 1.0, negated=True)])


def test_switch_on_when_cheap():
    report = solve_miqp(_switch(0.3), tol=1e-9)
    assert report.status == SolveStatus.OPTIMAL
    np.testing.assert_allclose(report.x, [0.8, 1.0], atol=1e-7)
    assert report.objective == pytest.approx(0.3, abs=1e-7)


def test_switch_off_when_expensive():
    report = solve_miqp(_switch(0.9), tol=1e-9)
    np.testing.assert_allclose(report.x, [0.0, 0.0], atol=1e-7)
    assert report.objective == pytest.approx(0.64, abs=1e-7)


def test_solution_is_integral_and_meets_links():
    problem = _switch(0.3)
    report = solve_miqp(problem, tol=1e-9)
    assert problem.is_integral(report.x)
    assert problem.link_violation(report.x) <= 1e-9


def test_hint_gives_same_optimum():
    report = solve_miqp(_switch(0.3), tol=1e-9, hint=np.array([0.0]))
    assert report.x[1] == pytest.approx(1.0)


def test_infeasible_binaries():
    qp = QpProblem(sp.csc_matrix(np.eye(2)), np.zeros(2), sp.csr_matrix(np.array([[1.0, 1.0]])),
                   np.array([1.5]), np.array([np.inf]), np.zeros(2), np.array([1.0, 1.0]))
    # b is held at 0, so x + b >= 1.5 cannot hold with x <= 1
    qp.ub[1] = 0.0
    report = solve_miqp(MiqpProblem(qp, [1]), tol=1e-9)
    assert report.status == SolveStatus.INFEASIBLE


def test_binary_bounds_must_stay_in_unit_interval():
    qp = QpProblem(sp.csc_matrix(np.eye(1)), np.zeros(1), sp.csr_matrix((0, 1)), np.zeros(0), np.zeros(0),
                   np.array([-1.0]), np.array([1.0]))
    with pytest.raises(ValueError, match=r"\[0, 1\]"):
        solve_miqp(MiqpProblem(qp, [0]))


def test_branching_on_several_binaries():
    # minimize sum_j (x_j - 0.6)^2 + 0.1 b_j with x_j <= b_j and at most two switches on
    n = 3
    P = sp.block_diag([2.0 * sp.eye(n), sp.csr_matrix((n, n))]).tocsc()
    q = np.concatenate([np.full(n, -1.2), np.full(n, 0.1)])
    rows = [np.concatenate([np.eye(n)[j], -np.eye(n)[j]]) for j in range(n)]
    rows.append(np.concatenate([np.zeros(n), np.ones(n)]))
    qp = QpProblem(P, q, sp.csr_matrix(np.array(rows)), np.full(n + 1, -np.inf),
                   np.concatenate([np.zeros(n), [2.0]]), np.zeros(2 * n), np.ones(2 * n), constant=n * 0.36)
    links = [BigMLink(j, (n + j,), 1.0, negated=True) for j in range(n)]
    report = solve_miqp(MiqpProblem(qp, np.arange(n, 2 * n), links), tol=1e-9)
    assert report.status == SolveStatus.OPTIMAL
    assert report.x[n:].sum() == pytest.approx(2.0)
    # two switched on at 0.1 each, one off at 0.36
    assert report.objective == pytest.approx(0.2 + 0.36, abs=1e-7)
    assert report.nodes >= 1


def _stall_open_nodes(monkeypatch):
    relax = _Search.relax

    def stalled(self, lb, ub, x0=None, y0=None):
        report = relax(self, lb, ub, x0, y0)
        b = self.problem.binaries
        if np.any(lb[b] < ub[b]):
            report.status = SolveStatus.ITERATION_LIMIT
        return report

    monkeypatch.setattr(_Search, "relax", stalled)


def test_unresolved_node_leaves_gap_uncertified(monkeypatch):
    _stall_open_nodes(monkeypatch)
    report = solve_miqp(_switch(0.3), tol=1e-9, hint=np.array([0.0]))
    assert report.status == SolveStatus.GAP_UNCERTIFIED
    assert report.usable
    np.testing.assert_allclose(report.x, [0.0, 0.0], atol=1e-7)


def test_unresolved_node_without_incumbent_is_not_infeasible(monkeypatch):
    _stall_open_nodes(monkeypatch)
    report = solve_miqp(_switch(0.3), tol=1e-9)
    assert report.status == SolveStatus.NUMERICAL_FAILURE
    assert not report.usable


def test_relaxation_iteration_limit_is_never_optimal():
    report = solve_miqp(_switch(0.3), tol=1e-12, settings=QpSettings(max_iter=1, polish=False))
    assert report.status != SolveStatus.OPTIMAL
