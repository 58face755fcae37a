import argparse
import logging
import sys

from pathlib import Path

from tabulate import tabulate

from farfield import harness
from farfield.errors import MissingBaseline, RejectedConfiguration, RejectedInput
from farfield.scenarios import SCENARIOS

_logger = logging.getLogger(__name__)

EXIT_PASSED = 0
EXIT_FAILED = 1
EXIT_USAGE = 2


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="farfield", description="Far-field asymptotics experiments.")
    parser.add_argument("--verbose", "-v", action="count", default=0, help="repeat for debug output")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="run one experiment and write its result bundle")
    source = run.add_mutually_exclusive_group(required=True)
    source.add_argument("--config", type=Path, help="TOML experiment file")
    source.add_argument("--scenario", help="run a registered scenario with its defaults")
    run.add_argument("--out", help="output root (FARFIELD_OUTPUT_ROOT takes precedence)")
    run.add_argument("--seed", type=int)

    sweep = commands.add_parser("sweep", help="run an experiment over its [sweep] parameter grid")
    sweep.add_argument("--config", type=Path, required=True)
    sweep.add_argument("--out")
    sweep.add_argument("--seed", type=int)
    sweep.add_argument("--jobs", type=int, default=1)

    verify = commands.add_parser("verify", help="compare a result bundle with a golden bundle")
    verify.add_argument("bundle", type=Path)
    verify.add_argument("golden", type=Path)
    verify.add_argument("--rel", type=float, default=harness.DEFAULT_RELATIVE)
    verify.add_argument("--abs", type=float, default=harness.DEFAULT_ABSOLUTE)

    commands.add_parser("list-scenarios", help="list the registered scenarios")
    return parser


def _configure_logging(verbosity: int):
    level = {0: logging.WARNING, 1: logging.INFO}.get(verbosity, logging.DEBUG)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def _run(arguments) -> int:
    if arguments.config is not None:
        config = harness.load_config(arguments.config, seed=arguments.seed, output=arguments.out)
    else:
        data = {"scenario": arguments.scenario, "seed": arguments.seed, "output": arguments.out}
        config = harness.resolve_config({key: value for key, value in data.items() if value is not None})
    bundle = harness.run(config)
    rows = [[flag, "pass" if passed else "FAIL"] for flag, passed in bundle.flags.items()]
    print(tabulate(rows, headers=["flag", "result"]))
    for error in bundle.errors:
        print(error, file=sys.stderr)
    print(bundle.directory)
    return EXIT_PASSED if bundle.passed else EXIT_FAILED


def _sweep(arguments) -> int:
    base, grid = harness.load_sweep(arguments.config, seed=arguments.seed, output=arguments.out)
    summary = harness.sweep(base, grid, arguments.jobs)
    print(tabulate(summary.rows(), headers=summary.columns))
    return EXIT_PASSED if summary["passed"].all() else EXIT_FAILED


def _verify(arguments) -> int:
    report = harness.verify(arguments.bundle, arguments.golden, {"": (arguments.rel, arguments.abs)})
    if report.mismatches:
        rows = [[m.field, m.expected, m.actual] for m in report.mismatches]
        print(tabulate(rows, headers=["field", "expected", "actual"]))
    print(f"{report.compared} fields compared, {len(report.mismatches)} mismatches")
    return EXIT_PASSED if report.passed else EXIT_FAILED


def _list_scenarios(_arguments) -> int:
    rows = [[s.name, s.theorem_case, s.estimate] for s in SCENARIOS.values()]
    print(tabulate(rows, headers=["scenario", "case", "estimate"]))
    return EXIT_PASSED


COMMANDS = {"run": _run, "sweep": _sweep, "verify": _verify, "list-scenarios": _list_scenarios}


def main(argv: list[str] | None = None) -> int:
    arguments = _parser().parse_args(argv)
    _configure_logging(arguments.verbose)
    try:
        return COMMANDS[arguments.command](arguments)
    except (RejectedConfiguration, RejectedInput, MissingBaseline) as error:
        _logger.error("%s", error)
        print(f"error: {error}", file=sys.stderr)
        return EXIT_USAGE if isinstance(error, RejectedConfiguration) else EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
