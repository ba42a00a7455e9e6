"""
Command-line entry point of the corner-ladder laboratory.

    python -m app.main run --config configs/roots_stokes.ini
    python -m app.main verify --config configs/verify.ini --threads 4

Exit status: 0 when every configured acceptance threshold passes, 1 on a
numerical failure or a failed threshold, 2 on a configuration error.
"""

import argparse
import logging
import sys
from typing import List, Optional

from .commands import dispatch
from .config import get_config, load_experiment_config, resolve_output_dir
from .errors import ConfigurationError, NumericalError
from .schemas import CommandResult
from .services.acceptance import run_suite
from .services.results_service import acceptance_table, write_acceptance, write_artifacts, write_summary

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cornerlab", description="Corner-ladder spectral laboratory")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("run", "run the experiment named by [run] mode"),
                            ("verify", "run the acceptance criteria named by [run] criteria")):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="experiment config (INI)")
        cmd.add_argument("--out", default=None, help="output directory")
        cmd.add_argument("--threads", type=int, default=None, help="worker threads (default: LADDER_THREADS)")
        cmd.add_argument("--verbose", action="store_true", help="log at DEBUG level")
    return parser


def _configure_logging(verbose: bool, level_name: str) -> None:
    level = logging.DEBUG if verbose else getattr(logging, level_name, logging.INFO)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s", force=True)


def _execute(args: argparse.Namespace) -> int:
    env = get_config()
    _configure_logging(args.verbose, env["LADDER_LOG_LEVEL"])
    config = load_experiment_config(args.config)
    threads = env["LADDER_THREADS"] if args.threads is None else args.threads
    if threads < 1:
        raise ConfigurationError(f"--threads must be at least 1, got {threads}")
    out = resolve_output_dir(config, args.out)

    if args.command == "run":
        logger.info(f"Running mode {config.run.mode} with {threads} thread(s), output in {out}")
        result = dispatch(config, threads)
        write_artifacts(out, f"cornerlab run: mode {config.run.mode}", result, config.output.plot_data)
        lines = list(result.summary)
        if result.acceptance:
            lines.extend(acceptance_table(result.acceptance))
    else:
        names = config.run.criteria
        logger.info(f"Verifying {len(names)} criteria with {threads} thread(s)")
        rows = run_suite(config, names, threads)
        summary = ("criteria: " + ", ".join(names),) if names else ("no criteria configured",)
        result = CommandResult(summary=summary, acceptance=rows)
        write_acceptance(out / "acceptance.csv", rows)
        write_summary(out / "summary.txt", "cornerlab verify", result)
        lines = list(summary) + acceptance_table(rows)

    print("\n".join(lines))
    passed = result.passed
    print("status: " + ("PASS" if passed else "FAIL"))
    return EXIT_OK if passed else EXIT_FAILED


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _execute(args)
    except ConfigurationError as e:
        logger.error(f"Configuration error: {e}")
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as e:
        logger.error(f"Numerical failure: {type(e).__name__}: {e}")
        print(f"numerical failure ({type(e).__name__}): {e}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
