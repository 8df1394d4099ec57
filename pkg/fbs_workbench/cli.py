"""
Command line entry point.

    fbs-workbench pipeline --config desk
    fbs-workbench simulate --config full --scenario 5 --seed 3
    fbs-workbench train --features xy --model ae --force
"""
import argparse
import logging
import sys

import structlog

from fbs_workbench.base.exceptions import WorkbenchError
from fbs_workbench.base.logging import log
from fbs_workbench.service.dataset_features.types import FeatureScheme
from fbs_workbench.service.detectors.types import DetectorKind
from fbs_workbench.service.pipeline.api import Pipeline
from fbs_workbench.service.pipeline.utils import apply_overrides, load_config

COMMANDS = ("simulate", "extract", "train", "evaluate", "report", "pipeline")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fbs-workbench",
        description=(
            "Simulate false base station attacks and evaluate novelty detectors on the"
            " measurement reports"
        ),
    )
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument(
        "-v", "--verbose", action="store_true", help="Log debug output"
    )
    verbosity.add_argument(
        "-q", "--quiet", action="store_true", help="Only log warnings and errors"
    )

    commands = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        sub = commands.add_parser(command)
        sub.add_argument(
            "--config",
            default="full",
            help="YAML config file, or the name of a bundled preset (full, desk)",
        )
        sub.add_argument(
            "--seed", type=int, help="Seed of the benign training simulation"
        )
        sub.add_argument(
            "--scenario",
            help="Only this false cell PCI, or 'benign' for the training run alone",
        )
        sub.add_argument("--features", choices=[s.value for s in FeatureScheme])
        sub.add_argument("--model", choices=[d.value for d in DetectorKind])
        sub.add_argument("--fpr", type=float, help="Target benign false positive rate")
        sub.add_argument("--output", help="Artifact directory")
        sub.add_argument("--workers", type=int, help="Worker processes")
        sub.add_argument(
            "--force", action="store_true", help="Overwrite artifacts of earlier runs"
        )
    return parser


def configure_logging(verbose: bool = False, quiet: bool = False) -> None:
    level = logging.INFO
    if verbose:
        level = logging.DEBUG
    elif quiet:
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(message)s", stream=sys.stderr)
    structlog.configure(
        processors=[
            structlog.processors.add_log_level,
            structlog.processors.TimeStamper(fmt="%H:%M:%S"),
            structlog.dev.ConsoleRenderer(),
        ],
        wrapper_class=structlog.make_filtering_bound_logger(level),
        logger_factory=structlog.PrintLoggerFactory(sys.stderr),
        cache_logger_on_first_use=True,
    )


def run(args: argparse.Namespace) -> list[str]:
    config = apply_overrides(
        load_config(args.config),
        seed=args.seed,
        scenario=args.scenario,
        features=args.features,
        model=args.model,
        fpr=args.fpr,
        output_dir=args.output,
        workers=args.workers,
    )
    pipeline = Pipeline(config, force=args.force)
    if args.command == "pipeline":
        return pipeline.run()
    return getattr(pipeline, args.command)()


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose, args.quiet)
    try:
        written = run(args)
    except WorkbenchError as e:
        log("error", str(e), stage=e.stage, exit_code=e.exit_code)
        return e.exit_code
    log("info", f"Wrote {len(written)} artifacts", command=args.command)
    return 0


if __name__ == "__main__":
    sys.exit(main())
