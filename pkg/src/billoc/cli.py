"""Command-line entry point.

Exit codes: 0 success, 2 configuration or missing-input error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import sys

from .config import STAGES, load_config
from .errors import BillocError, ConfigError, MissingArtifact, NumericalError, StageFailed

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

log = logging.getLogger("billoc")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="billoc", description="Classical and quantum localization pipeline "
                                "for the w = z + lambda z^2 billiard family.")
    p.add_argument("--config", required=True, help="INI file with a [run] section")
    p.add_argument("--stage", action="append", choices=STAGES + ("all",),
                   help="stage to run; repeat for several (default: stages listed in the config)")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--threads", type=int, default=1, help="worker processes / compiled-kernel threads")
    p.add_argument("--force", action="store_true", help="recompute stages whose artifacts already exist")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, StageFailed):
        exc = exc.cause
    if isinstance(exc, (ConfigError, MissingArtifact)):
        return EXIT_CONFIG
    if isinstance(exc, NumericalError):
        return EXIT_NUMERICAL
    return EXIT_NUMERICAL


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, out=args.out, seed=args.seed)
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        stages = cfg.stages
        if args.stage and "all" not in args.stage:
            stages = tuple(s for s in STAGES if s in args.stage)
        elif args.stage:
            stages = STAGES
        from .pipeline import Pipeline

        pipe = Pipeline(cfg, cfg.out, threads=args.threads, force=args.force)
        pipe.run(stages)
    except BillocError as exc:
        code = _exit_code(exc)
        print(f"billoc: error: {exc}", file=sys.stderr)
        return code
    for st in stages:
        print(f"{st}\t{pipe.stage_dir(st)}")
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
