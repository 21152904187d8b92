"""Main entry point for the radar-aware path planner"""

import argparse
import logging
import sys

from src.config import LOG_LEVEL, OUTPUT_DIR
from src.errors import PdvgError
from src.models.lincov import NoiseSourceSet, error_budget, sigma_pd_series
from src.models.montecarlo import ERROR_SIGNS, coverage_check, run_ensemble
from src.parsers.scenario_parser import dump_scenario, load_scenario
from src.parsers.waypoint_parser import load_waypoints
from src.planner.pdvg import evaluate_path, plan
from src.utils.export import save_frame, save_json, save_text
from src.utils.progress import set_progress

logger = logging.getLogger("src.main")

EXIT_OK = 0


def setup_logging(verbose=False, quiet=False):
    """Configure the root logger once; --quiet also silences progress bars."""
    if quiet:
        level = logging.ERROR
    elif verbose:
        level = logging.DEBUG
    else:
        level = getattr(logging, LOG_LEVEL.upper(), logging.INFO)
    logging.basicConfig(level=level,
                        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
                        force=True)
    set_progress(not quiet)


def create_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=OUTPUT_DIR,
                        help=f"Output directory (default: {OUTPUT_DIR})")
    common.add_argument("--format", choices=("csv", "json"), default="csv",
                        help="Table format (default: csv)")
    common.add_argument("--dt", type=float, help="Override the trajectory time step, s")
    common.add_argument("--workers", type=int,
                        help="Worker processes for budgets and Monte Carlo (default: MAX_WORKERS)")
    common.add_argument("--quiet", "-q", action="store_true",
                        help="Only report errors")
    common.add_argument("--verbose", "-v", action="store_true",
                        help="Debug logging and tracebacks")

    parser = argparse.ArgumentParser(
        prog="pdvg",
        description="Plan aircraft paths around ground radars under navigation uncertainty",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python -m src.main validate scenarios/scenario1.yaml
  python -m src.main plan scenarios/gauntlet.yaml --out data/gauntlet
  python -m src.main budget scenarios/scenario1.yaml --at 15120
  python -m src.main montecarlo scenarios/validation.yaml -n 500 --seed 7
        """)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", parents=[common], help="Run the planner")
    p.add_argument("scenario")

    p = sub.add_parser("evaluate", parents=[common], help="Detection series of a waypoint path")
    p.add_argument("scenario")
    p.add_argument("waypoints", help="CSV with 'p_n [m]', 'p_e [m]' columns")

    p = sub.add_parser("budget", parents=[common], help="Error budget of sigma_pd")
    p.add_argument("scenario")
    p.add_argument("--at", type=float, required=True, dest="t_snapshot",
                   help="Snapshot time along the trajectory, s")
    p.add_argument("--waypoints", help="Evaluate along these waypoints instead of the reference path")
    p.add_argument("--radar", help="Radar to budget (default: largest sigma_pd at the snapshot)")
    p.add_argument("--sources", nargs="+", choices=NoiseSourceSet.names(),
                   help="Sources to include (default: all)")

    p = sub.add_parser("montecarlo", parents=[common], help="Monte Carlo validation ensemble")
    p.add_argument("scenario")
    p.add_argument("-n", "--runs", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--traces", action="store_true", help="Also write the per-run P_D errors")
    p.add_argument("--sign", choices=ERROR_SIGNS, default=ERROR_SIGNS[0],
                   help="P_D error sign convention")
    p.add_argument("--compare", action="store_true",
                   help="Run LinCov on the same trajectory and report 3-sigma coverage")

    p = sub.add_parser("validate", parents=[common], help="Parse and check a scenario")
    p.add_argument("scenario")
    return parser


def _load(args):
    scenario = load_scenario(args.scenario)
    if args.dt:
        scenario = scenario.with_dt(args.dt)
    return scenario


def run_plan(args, scenario):
    result = plan(scenario)
    save_frame(result.waypoints_frame(), args.out, "waypoints", args.format)
    save_frame(result.polygons_frame(), args.out, "polygons", args.format)
    if result.trajectory is not None:
        save_frame(result.trajectory.to_frame(), args.out, "trajectory", args.format)
        save_frame(result.detection.to_frame(scenario.planner.p_dt, scenario.planner.m_sigma),
                   args.out, "detection", args.format)
    save_json(result.iteration_log(), args.out, "iterations")
    if not result.feasible:
        logger.error("No valid path: %s", result.diagnostics.get('reason'))
        return 3
    logger.info("Valid path after %d iterations, %d waypoints, min clearance %.1f km",
                result.iterations, len(result.waypoints),
                result.min_clearance(scenario.radars) / 1000.0)
    return EXIT_OK


def run_evaluate(args, scenario):
    trajectory, series = evaluate_path(load_waypoints(args.waypoints), scenario)
    save_frame(trajectory.to_frame(), args.out, "trajectory", args.format)
    save_frame(series.to_frame(scenario.planner.p_dt, scenario.planner.m_sigma),
               args.out, "detection", args.format)
    return EXIT_OK


def run_budget(args, scenario):
    trajectory = None
    if args.waypoints:
        trajectory = scenario.build_trajectory(load_waypoints(args.waypoints))
    budget = error_budget(scenario, args.t_snapshot, sources=args.sources, trajectory=trajectory,
                          radar=args.radar, workers=args.workers)
    save_frame(budget.to_frame(), args.out, "budget", args.format)
    save_json(budget.metadata(), args.out, "budget_meta")
    return EXIT_OK


def run_montecarlo(args, scenario):
    result = run_ensemble(scenario, args.runs, args.seed, workers=args.workers,
                          keep_traces=args.traces or args.compare, error_sign=args.sign)
    save_frame(result.to_frame(), args.out, "ensemble", args.format)
    meta = {'n_runs': result.n_runs, 'n_failed': result.n_failed, 'seed': result.seed,
            'error_sign': result.error_sign, 'sources': list(result.sources)}
    if args.compare:
        series = sigma_pd_series(scenario, NoiseSourceSet.all_on())
        meta['coverage_3sigma'] = coverage_check(result, series, 3.0)
        save_frame(series.to_frame(), args.out, "lincov", args.format)
    if args.traces:
        save_frame(result.traces_frame(), args.out, "traces", args.format)
    save_json(meta, args.out, "ensemble_meta")
    return EXIT_OK


def run_validate(args, scenario):
    logger.info("%s: %d radars, %d GPS-denied regions, IMU q_nu=%.3e q_omega=%.3e",
                scenario.name, len(scenario.radars), len(scenario.meas.gps_denied_regions),
                scenario.imu.q_nu, scenario.imu.q_omega)
    return EXIT_OK


COMMANDS = {
    'plan': run_plan,
    'evaluate': run_evaluate,
    'budget': run_budget,
    'montecarlo': run_montecarlo,
    'validate': run_validate,
}


def cli_dispatch(argv=None):
    """Parse ``argv``, run the subcommand and return its exit status."""
    args = create_parser().parse_args(argv)
    setup_logging(args.verbose, args.quiet)
    try:
        scenario = _load(args)
        status = COMMANDS[args.command](args, scenario)
        if args.command != 'validate':
            save_text(dump_scenario(scenario), args.out, "scenario.yaml")
        return status
    except PdvgError as e:
        logger.error("%s: %s", type(e).__name__, e, exc_info=args.verbose)
        return e.exit_code


def main():
    sys.exit(cli_dispatch())


if __name__ == "__main__":
    main()
