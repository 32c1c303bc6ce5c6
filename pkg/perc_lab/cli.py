# perc_lab/cli.py

import argparse
import logging
import os
from typing import List, Optional

from dotenv import load_dotenv

from .config import load_config
from .constants import (
    DEFAULT_LOG_FILE,
    ENV_LOG_FILE,
    ENV_OUT_DIR,
    ENV_WORKERS,
    EXIT_FAILURE,
    EXIT_OK,
    EXIT_PRECONDITION,
)
from .errors import PercLabError
from .experiments import replay, run
from .logging_config import configure_logging


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="perc-lab",
        description="Run reproducible percolation experiments from YAML configs and replay their manifests."
    )
    parser.add_argument(
        "--json_log_file",
        type=str,
        default=os.getenv(ENV_LOG_FILE, DEFAULT_LOG_FILE),
        help=f"Path to JSON log file (default=${ENV_LOG_FILE} or '{DEFAULT_LOG_FILE}')."
    )
    parser.add_argument(
        "--verbose",
        action="store_true",
        help="Enable verbose (debug) logging in console."
    )
    parser.add_argument(
        "--workers",
        type=int,
        default=os.getenv(ENV_WORKERS, "1"),
        help=f"Worker processes for Monte Carlo replicas (default=${ENV_WORKERS} or 1)."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_parser = sub.add_parser("run", help="Run the experiment a config describes.")
    run_parser.add_argument("config", type=str, help="Path to the YAML experiment config.")
    run_parser.add_argument("--seed", type=int, default=None, help="Override percolation.seed.")
    run_parser.add_argument(
        "--out",
        type=str,
        default=os.getenv(ENV_OUT_DIR),
        help=f"Override output.directory (default=${ENV_OUT_DIR} if set)."
    )
    run_parser.add_argument(
        "--fast",
        action="store_true",
        help="Divide sample counts by 10 and thin parameter grids."
    )

    replay_parser = sub.add_parser("replay", help="Re-run a manifest and compare output checksums.")
    replay_parser.add_argument("manifest", type=str, help="Path to a manifest.json written by 'run'.")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Entry point for the perc-lab CLI."""
    # Environment first, so PERC_LAB_* defaults reach the parser
    load_dotenv()

    args = _build_parser().parse_args(argv)
    configure_logging(json_file_path=args.json_log_file, verbose=args.verbose)

    if args.workers < 1:
        logging.error("--workers must be at least 1 (got %d).", args.workers)
        return EXIT_PRECONDITION

    try:
        if args.command == "run":
            cfg = load_config(args.config).with_overrides(seed=args.seed, out=args.out, fast=args.fast)
            configure_logging(json_file_path=args.json_log_file, verbose=args.verbose,
                              run_tag=cfg.config_hash[:12])
            manifest = run(cfg, workers=args.workers)
            logging.info("Manifest: %s", manifest.path)
            return EXIT_OK

        report = replay(args.manifest, workers=args.workers)
        for name, verdict in report.verdicts.items():
            logging.info("%s: %s", name, verdict)
        if not report.passed:
            logging.error("Replay of '%s' did not reproduce every file.", args.manifest)
            return EXIT_FAILURE
        logging.info("Replay of '%s' reproduced all %d file(s).", args.manifest, len(report.verdicts))
        return EXIT_OK

    except PercLabError as exc:
        logging.error("%s: %s", type(exc).__name__, exc)
        return exc.exit_code
    except (OSError, ValueError) as exc:
        logging.exception("An error occurred during file handling or value conversion: %s", exc)
        return EXIT_FAILURE


if __name__ == "__main__":
    raise SystemExit(main())
