"""Command-line experiment runner.

    python main.py list
    python main.py run smoke
    python main.py run my-scenario.toml --trials 20 --out-dir /tmp/results

Exit status: 0 when every enabled check passes, 1 when a check fails,
2 on a sampling or configuration error.
"""

import argparse
import logging
import sys
from typing import List, Optional

from config import Config, config
from experiment import ExperimentRunner, ScenarioResult
from models import SamplingError
from scenarios import list_scenarios, load_scenario

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_ERROR = 2


def build_parser() -> argparse.ArgumentParser:
    # accepted before or after the subcommand
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS, help="Only log errors")

    parser = argparse.ArgumentParser(
        prog="sampler",
        description="Continuous distributed sampling: simulations and bound checks",
        parents=[common],
    )
    commands = parser.add_subparsers(dest="command", required=True)

    commands.add_parser("list", parents=[common], help="List builtin scenarios")

    run = commands.add_parser("run", parents=[common], help="Run a builtin scenario or a TOML scenario file")
    run.add_argument("config", help="Builtin scenario name or path to a scenario file")
    run.add_argument("--seed", type=int, default=None, help="Override the scenario seed")
    run.add_argument("--trials", type=int, default=None, help="Override the trial count")
    run.add_argument("--out-dir", default=None, help="Artifact root directory")
    run.add_argument(
        "--check", action=argparse.BooleanOptionalAction, default=True,
        help="Evaluate the scenario's checks (default: on)",
    )
    return parser


def configure_logging(level: str, quiet: bool) -> None:
    logging.basicConfig(
        level=logging.ERROR if quiet else getattr(logging, level.upper(), logging.WARNING),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        force=True,
    )


def print_result(result: ScenarioResult) -> None:
    print(f"scenario {result.scenario.name}: {len(result.runs)} runs")
    for report in result.reports:
        status = "PASS" if report.passed else "FAIL"
        line = f"  [{status}] {report.name}: empirical {report.empirical_mean:.4g} vs {report.theoretical:.4g} (ratio {report.ratio:.3f})"
        if report.alternate is not None:
            line += f", alternate {report.alternate:.4g}"
        if report.detail:
            line += f"; {report.detail}"
        print(line)
    for name, path in result.artifacts.items():
        print(f"  {name}: {path}")


def cmd_list() -> int:
    for name, description in list_scenarios():
        print(f"{name:16} {description}")
    return EXIT_OK


def cmd_run(args: argparse.Namespace, settings: Config) -> int:
    scenario = load_scenario(args.config)
    if args.trials is not None and args.trials < 1:
        raise SamplingError("--trials must be at least 1")
    result = ExperimentRunner(settings).run(
        scenario,
        out_dir=args.out_dir,
        run_checks=args.check,
        trials=args.trials,
        seed=args.seed,
    )
    print_result(result)
    return EXIT_OK if result.passed else EXIT_CHECK_FAILED


def main(argv: Optional[List[str]] = None, settings: Config = config) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(settings.LOG_LEVEL, getattr(args, "quiet", False))
    try:
        if args.command == "list":
            return cmd_list()
        return cmd_run(args, settings)
    except SamplingError as exc:
        logger.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
