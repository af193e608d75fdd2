"""
Randomized self-test of the solvers and the verifier.

Four suites, each seeded per case so any failure can be replayed alone:

    qp          equality-constrained QPs against a dense KKT solve
    miqp        small mixed-binary QPs against enumeration of all assignments
    jacobian    smooth-constraint Jacobians against central differences
    equivalence verifier verdicts against transcription satisfaction on
                static-hang trajectories, clean and corrupted
"""

import itertools
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import scipy.sparse as sp

from .geometry import Wrench
from .layout import VariableLayout
from .limit_surface import decompose_patch_wrench, split_torsion
from .miqp_solver import MiqpProblem, solve_miqp
from .qp_solver import QpProblem, SolveStatus, solve_qp
from .scenario import Scenario, scenario_from_dict
from .scenario_library import build_scenario, build_scenario_dict
from .smooth_constraints import build_smooth_dynamics
from .trajectory import DiscreteVariables, TrajectoryVariables
from .transcription import BigMLink, build_miqp_constraints
from .verifier import ToleranceSet, verify


logger = logging.getLogger(__name__)

DEFAULT_COUNTS = {"miqp": 100, "qp": 100, "jacobian": 100, "equivalence": 50}
SUITES = tuple(DEFAULT_COUNTS)

QP_TOL = 1e-9
AGREEMENT = 1e-6
JACOBIAN_TOL = 1e-5
EQUIVALENCE_TOL = 1e-6
CORRUPTIONS = ("none", "lift", "force", "drop", "slip", "absent", "fractional")


@dataclass
class SuiteResult:
    name: str
    passed: int = 0
    total: int = 0
    failures: List[int] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.passed == self.total

    def to_dict(self) -> dict:
        return {"suite": self.name, "passed": self.passed, "total": self.total, "failures": self.failures}


@dataclass
class CaseOutcome:
    """Verdict of one case plus the data needed to replay it."""

    passed: bool
    detail: dict


def _rng(seed: int, suite: str, case: int) -> np.random.Generator:
    return np.random.default_rng([seed, SUITES.index(suite), case])


def _close(a: float, b: float) -> bool:
    return abs(a - b) <= AGREEMENT * max(1.0, abs(a), abs(b))


def _random_psd(rng: np.random.Generator, n: int) -> np.ndarray:
    M = rng.normal(size=(n, n))
    return M @ M.T + 0.1 * np.eye(n)


def qp_case(rng: np.random.Generator) -> CaseOutcome:
    """Equality-constrained QP; the KKT system gives the exact optimum."""
    n = int(rng.integers(3, 9))
    m = int(rng.integers(1, n))
    P = _random_psd(rng, n)
    q = rng.normal(size=n)
    A = rng.normal(size=(m, n))
    b = A @ rng.normal(size=n)

    kkt = np.block([[P, A.T], [A, np.zeros((m, m))]])
    exact = np.linalg.solve(kkt, np.concatenate([-q, b]))[:n]

    problem = QpProblem(P, q, A, b, b, np.full(n, -np.inf), np.full(n, np.inf), name="selftest-qp")
    report = solve_qp(problem, tol=QP_TOL)
    error = np.inf
    if report.status == SolveStatus.OPTIMAL:
        error = float(np.max(np.abs(report.x - exact)) / max(1.0, float(np.max(np.abs(exact)))))
    detail = {"P": P.tolist(), "q": q.tolist(), "A": A.tolist(), "b": b.tolist(),
              "status": report.status.value, "error": error}
    return CaseOutcome(error <= AGREEMENT, detail)


def _miqp_instance(rng: np.random.Generator) -> Tuple[MiqpProblem, int, int]:
    """
    nc continuous variables in [-5, 5] and nb binaries, with
    |x_(j mod nc)| <= 10 b_j, sum(x) >= c and sum(b) <= nb - 1.
    """
    nc = 4
    nb = int(rng.integers(1, 7))
    n = nc + nb
    P = _random_psd(rng, n)
    q = rng.normal(size=n) * 3.0
    rows, lower, upper, links = [], [], [], []
    for j in range(nb):
        for sign in (1.0, -1.0):
            row = np.zeros(n)
            row[j % nc] = sign
            row[nc + j] = -10.0
            links.append(BigMLink(len(rows), (nc + j,), 10.0, negated=True))
            rows.append(row)
            lower.append(-np.inf)
            upper.append(0.0)
    total = np.zeros(n)
    total[:nc] = 1.0
    rows.append(total)
    lower.append(float(rng.uniform(-2.0, 8.0)))
    upper.append(np.inf)
    budget = np.zeros(n)
    budget[nc:] = 1.0
    rows.append(budget)
    lower.append(-np.inf)
    upper.append(float(nb - 1))

    lb = np.concatenate([np.full(nc, -5.0), np.zeros(nb)])
    ub = np.concatenate([np.full(nc, 5.0), np.ones(nb)])
    qp = QpProblem(P, q, sp.csr_matrix(np.array(rows)), np.array(lower), np.array(upper), lb, ub,
                   name="selftest-miqp")
    return MiqpProblem(qp, np.arange(nc, n), links), nc, nb


def _enumerate(problem: MiqpProblem, nb: int) -> float:
    best = np.inf
    qp = problem.qp
    for values in itertools.product((0.0, 1.0), repeat=nb):
        lb, ub = qp.lb.copy(), qp.ub.copy()
        lb[problem.binaries] = values
        ub[problem.binaries] = values
        fixed = QpProblem(qp.P, qp.q, qp.A, qp.l, qp.u, lb, ub, name="selftest-enum")
        report = solve_qp(fixed, tol=QP_TOL)
        if report.status == SolveStatus.OPTIMAL:
            best = min(best, report.objective)
    return best


def miqp_case(rng: np.random.Generator) -> CaseOutcome:
    problem, nc, nb = _miqp_instance(rng)
    exact = _enumerate(problem, nb)
    report = solve_miqp(problem, tol=QP_TOL, gap=1e-9, node_limit=1000)
    found = report.objective if report.status == SolveStatus.OPTIMAL else np.inf
    if np.isinf(exact) or np.isinf(found):
        passed = bool(np.isinf(exact) and np.isinf(found) and report.status == SolveStatus.INFEASIBLE)
    else:
        passed = _close(found, exact) and problem.is_integral(report.x)
    qp = problem.qp
    detail = {"P": qp.P.toarray().tolist(), "q": qp.q.tolist(), "A": qp.A.toarray().tolist(),
              "l": qp.l.tolist(), "u": qp.u.tolist(), "n_continuous": nc, "n_binary": nb,
              "status": report.status.value, "objective": found, "enumerated": exact}
    return CaseOutcome(passed, detail)


_jacobian_scenario: Dict[str, Scenario] = {}


def jacobian_case(rng: np.random.Generator) -> CaseOutcome:
    """Random point of a patch-contact robot's smooth block, pitch kept away from the singularity."""
    if "patch" not in _jacobian_scenario:
        _jacobian_scenario["patch"] = build_scenario("climbing-4-holds", "desk", horizon=2)
    s = _jacobian_scenario["patch"]
    layout = VariableLayout(s, contacts=False, name="selftest-nlp")
    smooth = build_smooth_dynamics(s, layout)
    x = rng.uniform(-0.5, 0.5, size=layout.n)
    error = smooth.check_jacobians(x)
    return CaseOutcome(error <= JACOBIAN_TOL, {"x": x.tolist(), "error": error})


def _hang_scenario(rng: np.random.Generator) -> Scenario:
    """Point-contact walker standing still, with randomized mass and stance."""
    data = build_scenario_dict("walking-flat", "desk", horizon=2)
    data["robot"]["mass"] = float(rng.uniform(3.0, 10.0))
    start = [float(rng.uniform(-0.3, 0.3)), float(rng.uniform(-0.3, 0.3)), data["initial"]["r"][2]]
    data["initial"] = {"r": start}
    data["target"] = {"r": list(start)}
    for finger in data["robot"]["fingers"][::2]:
        finger["offset"][0] *= float(rng.uniform(0.8, 1.2))
        finger["offset"][1] *= float(rng.uniform(0.8, 1.2))
    return scenario_from_dict(data)


def static_hang(s: Scenario) -> Optional[Tuple[TrajectoryVariables, DiscreteVariables]]:
    """
    Motionless trajectory whose vertical contact forces balance gravity and
    its moment about the body. Returns None if the balance needs a pulling
    foot or exceeds a region's force limit.
    """
    robot = s.robot
    N = s.horizon
    traj = TrajectoryVariables.for_scenario(s)
    disc = DiscreteVariables.for_scenario(s)
    body = s.body_state("initial")
    p, q = s.initial_fingers()
    traj.r[:] = body["r"]
    traj.theta[:] = s.linearize_at
    traj.p[:] = p
    traj.q[:] = q
    for l in range(robot.n_limbs):
        first, second = robot.limb_fingers(l)
        traj.d[:, l] = p[second] - p[first]

    active = list(robot.active_fingers)
    arm = body["r"] - p[active]
    balance = np.vstack([np.ones(len(active)), arm[:, 1], arm[:, 0]])
    weight = -robot.mass * robot.gravity[2]
    fz = np.linalg.lstsq(balance, np.array([weight, 0.0, 0.0]), rcond=None)[0]
    region = s.regions[0]
    if np.any(fz <= 0.0) or np.any(fz > region.f_max):
        return None

    for t in range(N):
        for k, i in enumerate(active):
            force = np.array([0.0, 0.0, fz[k]])
            traj.lam[t, i] = region.rotation @ force
            traj.f[t, i, 0] = force
            traj.mz_plus[t, i, 0], traj.mz_minus[t, i, 0], disc.gamma[t, i, 0] = split_torsion(0.0)
            spine = decompose_patch_wrench(region.surface, Wrench(force, np.zeros(3), region.id))[1]
            traj.spine[t, i, 0] = [spine.force[0], spine.force[1], spine.moment[2]]
            disc.alpha[t, i, 0] = 1
    return traj, disc


def corrupt(s: Scenario, traj: TrajectoryVariables, disc: DiscreteVariables, kind: str):
    """Break the static hang in place; every kind except 'none' makes it infeasible."""
    active = list(s.robot.active_fingers)
    i = active[0]
    if kind == "lift":
        traj.p[1:, i, 2] += 0.05
        traj.p[1:, i + 1, 2] += 0.05
    elif kind == "force":
        traj.lam[0, i, 2] += 3.0
        traj.f[0, i, 0, 2] += 3.0
    elif kind == "drop":
        disc.alpha[0, i, 0] = 0
    elif kind == "slip":
        # Opposite shear on two feet on the same side keeps the net force.
        side = np.sign(traj.p[0, i, 1] - traj.r[0, 1])
        j = next(k for k in active[1:] if np.sign(traj.p[0, k, 1] - traj.r[0, 1]) == side)
        shear = 0.9 * min(traj.f[0, i, 0, 2], traj.f[0, j, 0, 2])
        for finger, sign in ((i, 1.0), (j, -1.0)):
            traj.lam[0, finger, 0] += sign * shear
            traj.f[0, finger, 0, 0] += sign * shear
    elif kind == "absent":
        disc.alpha[0, i + 1, 0] = 1
    elif kind == "fractional":
        # assigned after construction, so the binary check in DiscreteVariables never sees it
        disc.alpha = disc.alpha.astype(float)
        disc.alpha[0, i, 0] = 0.5
    elif kind != "none":
        raise ValueError(f"Unknown corruption: {kind}")


def transcription_satisfied(s: Scenario, traj: TrajectoryVariables, disc: DiscreteVariables,
                            tol: float = EQUIVALENCE_TOL) -> bool:
    """Whether the packed trajectory meets every planner row, bound and smooth residual."""
    layout = VariableLayout(s, name="selftest")
    x = layout.pack(traj, disc)
    lb, ub = layout.bounds()
    if np.any(x < lb - tol) or np.any(x > ub + tol):
        return False
    constraints = build_miqp_constraints(s, layout)
    binary = x[constraints.binaries]
    if np.any(np.abs(binary - np.rint(binary)) > tol):
        return False
    if constraints.max_violation(x) > tol:
        return False
    return build_smooth_dynamics(s, layout).max_violation(x) <= tol


def equivalence_case(rng: np.random.Generator, case: int) -> CaseOutcome:
    kind = CORRUPTIONS[case % len(CORRUPTIONS)]
    s = _hang_scenario(rng)
    hang = static_hang(s)
    while hang is None:
        s = _hang_scenario(rng)
        hang = static_hang(s)
    traj, disc = hang
    corrupt(s, traj, disc, kind)
    tight = ToleranceSet(position=EQUIVALENCE_TOL, force=EQUIVALENCE_TOL, rotation=EQUIVALENCE_TOL,
                         moment=EQUIVALENCE_TOL, bounds=EQUIVALENCE_TOL, membership=EQUIVALENCE_TOL)
    report = verify(s, traj, disc, tight)
    planner = transcription_satisfied(s, traj, disc)
    detail = {"corruption": kind, "scenario": s.to_dict(), "verifier": report.passed,
              "transcription": planner, "failed_families": report.failed_families}
    return CaseOutcome(report.passed == planner, detail)


def _write_replay(out_dir: Path, suite: str, seed: int, case: int, detail: dict) -> Path:
    path = out_dir / "replay" / f"{suite}-{case:03d}.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump({"suite": suite, "seed": seed, "case": case, "data": detail}, f, indent=2, default=float)
    return path


def _run_suite(name: str, count: int, seed: int, case_fn: Callable[[int], CaseOutcome],
               out_dir: Optional[Path]) -> SuiteResult:
    result = SuiteResult(name, total=count)
    for case in range(count):
        try:
            outcome = case_fn(case)
        except (ValueError, RuntimeError, np.linalg.LinAlgError) as e:
            outcome = CaseOutcome(False, {"error": str(e)})
        if outcome.passed:
            result.passed += 1
            continue
        result.failures.append(case)
        logger.warning(f"Self-test {name} case {case} failed")
        if out_dir is not None:
            _write_replay(out_dir, name, seed, case, outcome.detail)
    logger.info(f"Self-test {name}: {result.passed}/{result.total} passed")
    return result


def run_suites(seed: int = 0, counts: Optional[Dict[str, int]] = None,
               out_dir: Optional[Path] = None) -> List[SuiteResult]:
    """
    Run every suite.

    Args:
        seed: Base seed; case k of a suite always sees the same instance
        counts: Cases per suite (default DEFAULT_COUNTS); 0 skips a suite
        out_dir: Where replay files of failing cases go

    Raises:
        ValueError: If counts names an unknown suite or a negative count
    """
    counts = {**DEFAULT_COUNTS, **(counts or {})}
    for name, count in counts.items():
        if name not in SUITES:
            raise ValueError(f"Unknown self-test suite: {name}")
        if count < 0:
            raise ValueError(f"Case count for {name} must be non-negative, got: {count}")
    out_dir = Path(out_dir) if out_dir is not None else None
    cases = {
        "miqp": lambda k: miqp_case(_rng(seed, "miqp", k)),
        "qp": lambda k: qp_case(_rng(seed, "qp", k)),
        "jacobian": lambda k: jacobian_case(_rng(seed, "jacobian", k)),
        "equivalence": lambda k: equivalence_case(_rng(seed, "equivalence", k), k),
    }
    return [_run_suite(name, counts[name], seed, cases[name], out_dir) for name in SUITES]


def run_selftest(seed: int = 0, counts: Optional[Dict[str, int]] = None, out_dir: Optional[Path] = None) -> int:
    """
    Returns:
        0 when every case of every suite passes, else 1
    """
    results = run_suites(seed, counts, out_dir)
    for result in results:
        status = "ok" if result.ok else f"FAILED {result.failures}"
        print(f"{result.name:<12} {result.passed:>4}/{result.total:<4} {status}")
    if out_dir is not None:
        summary = Path(out_dir) / "selftest.json"
        summary.parent.mkdir(parents=True, exist_ok=True)
        with open(summary, "w") as f:
            json.dump({"seed": seed, "suites": [r.to_dict() for r in results]}, f, indent=2)
    return 0 if all(r.ok for r in results) else 1
