"""Command-line entry point.

One JSON config file drives everything; subcommands run individual pipeline
stages or the whole chain.  Exit codes: 0 success, 1 user error (bad config,
missing file), 2 internal error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import traceback
from pathlib import Path

from .pipeline import STAGES, ConfigError, PipelineConfig, run_all

COMMANDS = tuple(STAGES) + ("run-all",)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spillhar",
        description="Realized-measure construction, quantile spillover "
                    "estimation, and state-adaptive HAR forecasting.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True,
                        help="path to the JSON pipeline configuration")
    parser.add_argument("--out", help="override the output directory")
    parser.add_argument("--seed", type=int, help="override the master seed")
    parser.add_argument("--threads", type=int,
                        help="override the worker thread count")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def load_config(args) -> PipelineConfig:
    cfg = PipelineConfig.from_json(args.config)
    # only the output directory and thread count may come from the
    # environment; flags take precedence over both
    env_out = os.environ.get("SPILLHAR_OUT_DIR")
    env_threads = os.environ.get("SPILLHAR_THREADS")
    if env_out:
        cfg.out_dir = env_out
    if env_threads:
        cfg.threads = int(env_threads)
    if args.out:
        cfg.out_dir = args.out
    if args.seed is not None:
        cfg.seed = args.seed
    if args.threads is not None:
        cfg.threads = args.threads
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        Path(cfg.out_dir).mkdir(parents=True, exist_ok=True)
        if args.command == "run-all":
            run_all(cfg)
        else:
            STAGES[args.command](cfg)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception:  # noqa: BLE001 - the boundary reports and exits
        traceback.print_exc()
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
