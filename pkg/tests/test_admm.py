import csv

import numpy as np
import pytest

from patchplan.admm import AdmmResult, SolverError, _accept, build_split, run_admm, write_residuals
from patchplan.consensus import RESIDUALS_HEADER
from patchplan.qp_solver import SolveReport, SolveStatus
from patchplan.splitting import SplitMode
from patchplan.trajectory import DiscreteVariables, TrajectoryVariables


class _Stub:
    name = "stub"
    last = None


def test_iters_must_be_positive(walking):
    with pytest.raises(ValueError, match="iters must be >= 1"):
        run_admm(walking, iters=0)


def test_unknown_mode(walking):
    with pytest.raises(ValueError):
        build_split(walking, "three-block")


def test_unusable_first_report_raises():
    report = SolveReport(SolveStatus.INFEASIBLE, np.nan, None)
    with pytest.raises(SolverError, match="block 'stub' at ADMM iteration 3"):
        _accept(_Stub(), report, 3)


def test_unusable_report_falls_back_to_previous_solution():
    block = _Stub()
    block.last = SolveReport(SolveStatus.OPTIMAL, 1.0, np.arange(3.0))
    x = _accept(block, SolveReport(SolveStatus.NUMERICAL_FAILURE, np.nan, None), 4)
    np.testing.assert_array_equal(x, np.arange(3.0))


def test_best_iterate_is_accepted():
    block = _Stub()
    report = SolveReport(SolveStatus.ITERATION_LIMIT, 1.0, np.ones(2))
    np.testing.assert_array_equal(_accept(block, report, 1), np.ones(2))
    assert block.last is report


def test_converged_at_without_split(walking):
    result = AdmmResult(TrajectoryVariables.for_scenario(walking), DiscreteVariables.for_scenario(walking), [])
    assert result.converged_at is None
    assert result.iterations == 0


@pytest.mark.slow
@pytest.mark.parametrize("mode", list(SplitMode))
def test_short_run(walking, mode, tmp_path):
    result = run_admm(walking, mode=mode, iters=2, log_dir=tmp_path, threads=1)
    traj, disc, history = result
    assert 1 <= len(history) <= 2
    assert [record.iteration for record in history] == list(range(1, len(history) + 1))
    traj.check_shapes(walking)
    disc.check_shapes(walking)
    np.testing.assert_allclose(traj.r[0], walking.body_state("initial")["r"], atol=1e-6)
    np.testing.assert_allclose(traj.r[-1], walking.body_state("target")["r"], atol=1e-6)
    assert set(result.reports[0]) == {block.name for block in result.split.blocks}
    assert list(tmp_path.glob("solve_*_001.csv"))


@pytest.mark.slow
def test_residual_file(walking, tmp_path):
    result = run_admm(walking, iters=1)
    with open(write_residuals(result, tmp_path / "residuals.csv")) as f:
        rows = list(csv.reader(f))
    assert rows[0] == RESIDUALS_HEADER
    assert len(rows) == 2
    assert all(float(v) >= 0.0 for v in rows[1][1:])


@pytest.mark.slow
def test_contacts_are_integral_and_single(climbing):
    result = run_admm(climbing, iters=1)
    disc = result.discrete
    assert set(np.unique(disc.alpha)).issubset({0, 1})
    assert np.all(disc.alpha.sum(axis=2) <= 1)
