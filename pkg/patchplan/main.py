"""Command-line entry point for Patchplan."""

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional

from patchplan.admm import SolverError, run_admm, write_residuals
from patchplan.config import RunConfig, create_default_config, get_default_config_path
from patchplan.experiments import EXPERIMENTS, run_experiments
from patchplan.layout import VariableLayout
from patchplan.scenario import Scenario, apply_overrides, load_scenario
from patchplan.scenario_library import SCALES, build_scenario, export_scenarios, scenario_names
from patchplan.selftest import DEFAULT_COUNTS, run_selftest
from patchplan.trajectory import (export_contacts_csv, export_trajectory_csv, import_contacts_csv,
                                  import_trajectory_csv)
from patchplan.transcription import (build_miqp_constraints, build_nlp_linear_constraints, constraint_counts,
                                     dump_triplets)
from patchplan.verifier import EXIT_FAIL, EXIT_SHAPE, ToleranceSet, verify


logger = logging.getLogger(__name__)

EXIT_INPUT = 2
EXIT_SOLVER = 3


def setup_logging(verbose: bool = False):
    """Configure logging for stdout."""
    level = logging.DEBUG if verbose else logging.INFO
    logging.basicConfig(
        level=level,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[logging.StreamHandler(sys.stdout)]
    )


def resolve_scenario(reference) -> Scenario:
    """
    Load a scenario from a file, or build a shipped one by name.

    Shipped names are '<scenario>' (desk scale) or '<scenario>-<scale>',
    e.g. 'walking-flat-full'.

    Raises:
        FileNotFoundError: If reference is neither a file nor a shipped name
        ScenarioError: If the file violates the schema
    """
    path = Path(reference)
    if path.exists():
        return load_scenario(path)
    name = str(reference)
    for scale in SCALES:
        if name.endswith(f"-{scale}") and name[:-len(scale) - 1] in scenario_names():
            return build_scenario(name[:-len(scale) - 1], scale)
    if name in scenario_names():
        return build_scenario(name, "desk")
    raise FileNotFoundError(f"Scenario file not found: {reference}")


def tolerances_for(config: RunConfig, s: Scenario) -> ToleranceSet:
    """Verifier thresholds; the moment threshold defaults by scenario scale."""
    moment = config.tol_moment
    if moment is None:
        moment = ToleranceSet.desk().moment if s.name.endswith("-desk") else ToleranceSet().moment
    return ToleranceSet(position=config.tol_position, force=config.tol_force,
                        rotation=config.tol_rotation, moment=moment)


def load_run_config(args) -> RunConfig:
    """
    File configuration (if any) with command-line flags on top.

    An explicit --config must exist; the default path is optional.
    """
    config_path = args.config or get_default_config_path()
    if args.config is not None or config_path.exists():
        config = RunConfig.load(config_path)
    else:
        config = RunConfig()
    return config.with_overrides(
        scenario=getattr(args, 'scenario', None),
        mode=getattr(args, 'mode', None),
        iterations=getattr(args, 'iters', None),
        rho=getattr(args, 'rho', None),
        horizon=getattr(args, 'horizon', None),
        dt=getattr(args, 'dt', None),
        tol_position=getattr(args, 'tol_pos', None),
        tol_force=getattr(args, 'tol_force', None),
        tol_rotation=getattr(args, 'tol_rot', None),
        tol_moment=getattr(args, 'tol_moment', None),
        output_dir=getattr(args, 'out', None),
        seed=getattr(args, 'seed', None),
        verbose=args.verbose or None,
    )


def _scenario_for(config: RunConfig) -> Scenario:
    if config.scenario is None:
        raise ValueError("No scenario given: pass --scenario or set run.scenario in the configuration")
    s = resolve_scenario(config.scenario)
    return apply_overrides(s, rho=config.rho, horizon=config.horizon, dt=config.dt, iterations=config.iterations)


def cmd_plan(config: RunConfig) -> int:
    """
    Plan a scenario and write trajectory.csv, contacts.csv, residuals.csv
    and report.json to the output directory.

    Returns:
        0 if the verifier passes, 1 if it fails, 2 on scenario errors,
        3 if a block produced no usable solution
    """
    try:
        s = _scenario_for(config)
    except (FileNotFoundError, ValueError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_INPUT

    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    log_dir = out / "solves" if config.verbose else None
    if log_dir is not None:
        log_dir.mkdir(exist_ok=True)

    try:
        result = run_admm(s, mode=config.mode, iters=config.iterations, log_dir=log_dir)
    except SolverError as e:
        print(f"Error: Solver failure: {e}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_INPUT

    export_trajectory_csv(result.trajectory, out / "trajectory.csv")
    export_contacts_csv(result.trajectory, result.discrete, s, out / "contacts.csv")
    write_residuals(result, out / "residuals.csv")
    report = verify(s, result.trajectory, result.discrete, tolerances_for(config, s))
    report.write_json(out / "report.json")

    print(f"{'iter':>4} {'pos [m]':>10} {'force [N]':>10} {'rot [rad]':>10} {'moment [N*m]':>13} {'dual':>10}")
    for record in result.history:
        print(f"{record.iteration:>4} {record.pos:>10.4f} {record.force:>10.4f} {record.rot:>10.4f} "
              f"{record.moment:>13.4f} {record.dual:>10.4f}")
    print()
    print(report.table())
    print(f"\nResults written to: {out}")
    return report.exit_code


def cmd_verify(config: RunConfig, trajectory: Path, contacts: Path) -> int:
    """
    Verify a trajectory and contacts CSV pair against a scenario.

    Returns:
        0 pass, 1 fail, 2 if any file is missing or doesn't parse
    """
    try:
        s = _scenario_for(config)
        traj = import_trajectory_csv(trajectory, s)
        disc = import_contacts_csv(contacts, s, traj)
        report = verify(s, traj, disc, tolerances_for(config, s))
    except (FileNotFoundError, ValueError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_SHAPE
    print(report.table())
    if report.exit_code == EXIT_FAIL:
        print(f"Failed families: {', '.join(report.failed_families)}")
    return report.exit_code


def cmd_selftest(config: RunConfig, counts: dict) -> int:
    out = Path(config.output_dir)
    return run_selftest(seed=config.seed, counts=counts, out_dir=out)


def cmd_experiments(config: RunConfig, names: Optional[list], pairs: int) -> int:
    results = run_experiments(Path(config.output_dir), names=names, seed=config.seed, pairs=pairs)
    failed = []
    for name, result in results.items():
        outcomes = result.values() if name == "walking_convergence" else [result]
        passed = all(outcome["passed"] for outcome in outcomes)
        print(f"{name:<24} {'ok' if passed else 'FAIL'}")
        if not passed:
            failed.append(name)
    return EXIT_FAIL if failed else 0


def cmd_dump(config: RunConfig) -> int:
    """Write the linear constraint sets of the two-block split as sparse triplets."""
    try:
        s = _scenario_for(config)
    except (FileNotFoundError, ValueError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_INPUT
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    miqp_layout = VariableLayout(s, name="miqp")
    nlp_layout = VariableLayout(s, contacts=False, name="nlp")
    dump_triplets(build_miqp_constraints(s, miqp_layout), out / "miqp_constraints.txt", miqp_layout.labels())
    dump_triplets(build_nlp_linear_constraints(s, nlp_layout), out / "nlp_constraints.txt", nlp_layout.labels())
    for tag, count in constraint_counts(s).items():
        print(f"{tag:<24} {count:>8}")
    print(f"\nConstraint sets written to: {out}")
    return 0


def cmd_scenarios(out: Optional[Path]) -> int:
    if out is None:
        for name in scenario_names():
            print(f"{name:<24} {', '.join(f'{name}-{scale}' for scale in SCALES)}")
        return 0
    for path in export_scenarios(out):
        print(path)
    return 0


def init_config(config_path: Optional[Path] = None):
    """Generate a configuration template."""
    config_path = config_path or get_default_config_path()

    if config_path.exists():
        response = input(f"Config file already exists at {config_path}. Overwrite? [y/N] ")
        if response.lower() != 'y':
            print("Aborted.")
            return

    create_default_config(config_path)
    print(f"Configuration template created at: {config_path}")
    print("\nPlease edit this file with your scenario path and output directory.")


def _add_scenario_flags(parser: argparse.ArgumentParser):
    parser.add_argument('--scenario', '-s', help='Scenario file or shipped scenario name (e.g. walking-flat-desk)')
    parser.add_argument('--rho', type=float, help='ADMM penalty override')
    parser.add_argument('--horizon', type=int, help='Horizon length override')
    parser.add_argument('--dt', type=float, help='Time step override [s]')


def _add_tolerance_flags(parser: argparse.ArgumentParser):
    parser.add_argument('--tol-pos', type=float, help='Position tolerance [m] (default: 0.03)')
    parser.add_argument('--tol-force', type=float, help='Force tolerance [N] (default: 0.5)')
    parser.add_argument('--tol-rot', type=float, help='Rotation tolerance [rad] (default: 0.05)')
    parser.add_argument('--tol-moment', type=float, help='Moment tolerance [N*m] (default: by scenario scale)')


def _parse_counts(values) -> dict:
    counts = {}
    for value in values or []:
        name, _, count = value.partition('=')
        if name not in DEFAULT_COUNTS or not count.isdigit():
            raise ValueError(f"Invalid suite count: {value}. Use SUITE=N with SUITE in {', '.join(DEFAULT_COUNTS)}")
        counts[name] = int(count)
    return counts


def cli():
    """Command-line interface entry point."""
    parser = argparse.ArgumentParser(
        description="Patchplan - Contact planning for climbing robots with patch-contact grippers"
    )
    parser.add_argument(
        '--config', '-c',
        type=Path,
        help='Path to configuration file (default: ~/.config/patchplan/config.yaml)'
    )
    parser.add_argument(
        '--verbose', '-v',
        action='store_true',
        help='Enable verbose logging and per-solve iteration logs'
    )

    subparsers = parser.add_subparsers(dest='command', help='Commands')

    plan_parser = subparsers.add_parser('plan', help='Plan a scenario with ADMM')
    _add_scenario_flags(plan_parser)
    _add_tolerance_flags(plan_parser)
    plan_parser.add_argument('--mode', choices=['two-block', 'multi-block'], help='ADMM split')
    plan_parser.add_argument('--iters', type=int, help='ADMM iterations')
    plan_parser.add_argument('--out', '-o', type=Path, help='Output directory')
    plan_parser.add_argument('--seed', type=int, help='Random seed')

    verify_parser = subparsers.add_parser('verify', help='Verify a planned trajectory')
    _add_scenario_flags(verify_parser)
    _add_tolerance_flags(verify_parser)
    verify_parser.add_argument('--trajectory', type=Path, required=True, help='Trajectory CSV')
    verify_parser.add_argument('--contacts', type=Path, required=True, help='Contacts CSV')

    selftest_parser = subparsers.add_parser('selftest', help='Run the randomized solver and verifier checks')
    selftest_parser.add_argument('--seed', type=int, help='Base seed (default: 0)')
    selftest_parser.add_argument('--count', action='append', metavar='SUITE=N',
                                 help=f"Cases for one suite ({', '.join(DEFAULT_COUNTS)}); repeatable")
    selftest_parser.add_argument('--out', '-o', type=Path, help='Directory for replay files')

    experiments_parser = subparsers.add_parser('experiments', help='Run the desk-scale experiment suite')
    experiments_parser.add_argument('--only', action='append', choices=list(EXPERIMENTS),
                                    help='Run only this experiment; repeatable')
    experiments_parser.add_argument('--pairs', type=int, default=10, help='Walking start/goal pairs (default: 10)')
    experiments_parser.add_argument('--seed', type=int, help='Seed of the walking pairs')
    experiments_parser.add_argument('--out', '-o', type=Path, help='Output directory')

    dump_parser = subparsers.add_parser('dump', help='Write the constraint sets as sparse triplets')
    _add_scenario_flags(dump_parser)
    dump_parser.add_argument('--out', '-o', type=Path, help='Output directory')

    scenarios_parser = subparsers.add_parser('scenarios', help='List or export the shipped scenarios')
    scenarios_parser.add_argument('--out', '-o', type=Path, help='Export every scenario as JSON here')

    subparsers.add_parser('init', help='Generate configuration template')

    args = parser.parse_args()

    # Commands that don't need a run configuration
    if args.command == 'init':
        init_config(args.config)
        return
    if args.command == 'scenarios':
        setup_logging(args.verbose)
        sys.exit(cmd_scenarios(args.out))
    if args.command is None:
        parser.print_help()
        sys.exit(1)

    try:
        config = load_run_config(args)
    except FileNotFoundError as e:
        print(f"Error: {e}", file=sys.stderr)
        print("Run 'patchplan init' to create a template.", file=sys.stderr)
        sys.exit(EXIT_INPUT)
    except ValueError as e:
        print(f"Error: Invalid configuration: {e}", file=sys.stderr)
        sys.exit(EXIT_INPUT)

    setup_logging(config.verbose)

    if args.command == 'plan':
        sys.exit(cmd_plan(config))
    elif args.command == 'verify':
        sys.exit(cmd_verify(config, args.trajectory, args.contacts))
    elif args.command == 'selftest':
        try:
            counts = _parse_counts(args.count)
        except ValueError as e:
            print(f"Error: {e}", file=sys.stderr)
            sys.exit(EXIT_INPUT)
        sys.exit(cmd_selftest(config, counts))
    elif args.command == 'experiments':
        sys.exit(cmd_experiments(config, args.only, args.pairs))
    elif args.command == 'dump':
        sys.exit(cmd_dump(config))


if __name__ == '__main__':
    cli()
