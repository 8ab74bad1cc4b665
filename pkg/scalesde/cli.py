"""
Command line runner: `scalesde <suite> --config run.json --out results`.
"""
import argparse
import logging
import sys
from . import __version__
from .core.experiment import run_experiment
from .utils import SUITES
from .utils import ExperimentConfig


def build_parser():
    parser = argparse.ArgumentParser(
        prog="scalesde",
        description="Picard iteration of interacting spin SDEs in a scale of weighted spaces.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    subparsers = parser.add_subparsers(dest="suite", required=True)
    for suite in SUITES:
        sub = subparsers.add_parser(suite, help="run the {} suite".format(suite))
        sub.add_argument("--config", default=None, help="JSON configuration file")
        sub.add_argument("--out", default=None, help="output directory")
        sub.add_argument("--seed", type=int, default=None, help="master seed (unsigned 64-bit)")
        sub.add_argument("--workers", type=int, default=None, help="joblib workers")
        sub.add_argument("-v", "--verbose", action="count", default=0)
    return parser


def main(argv=None):
    """
    Run one suite and return the exit status: 0 if every check passed, 1 if a
    check failed or a step raised, 2 for an invalid configuration.
    """
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(message)s")

    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        print("--seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 2

    options = {"suite": args.suite, "seed": args.seed, "workers": args.workers, "out": args.out}
    options = {k: v for k, v in options.items() if v is not None}
    source = args.config if args.config is not None else ExperimentConfig()

    experiment = run_experiment(source, options)
    error = experiment.output["error"]
    if error is not None and error["step"] == "config":
        print(error["message"], file=sys.stderr)
        return 2
    for check in experiment.manifest["checks"]:
        print("{:<6} {}".format("PASS" if check["passed"] else "FAIL", check["name"]))
    if error is not None:
        print("ERROR  {}: {}".format(error["step"], error["message"]), file=sys.stderr)
    return 0 if experiment.passed else 1


if __name__ == "__main__":
    sys.exit(main())
