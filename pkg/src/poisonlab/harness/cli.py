"""Command line: ``poisonlab run|sweep|report``.

Exit codes: 0 success, 1 configuration error, 2 runtime error (including
grid cells that failed and were skipped).
"""

from __future__ import annotations

import argparse
import logging
import sys

from ..errors import ConfigurationError
from .config import load_config
from .runner import DIMENSIONS, format_table, report, run_experiment, sweep

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2

log = logging.getLogger("poisonlab")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="poisonlab", description="LDP poisoning detection experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the configured grid")
    r.add_argument("config")
    r.add_argument("--output-dir")
    s = sub.add_parser("sweep", help="sweep one dimension")
    s.add_argument("config")
    s.add_argument("--dim", required=True, help=f"one of {', '.join(DIMENSIONS)}")
    s.add_argument("--output-dir")
    rep = sub.add_parser("report", help="summarize an artifact directory")
    rep.add_argument("artifact_dir")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "report":
            print(format_table(report(args.artifact_dir)), end="")
            return EXIT_OK
        cfg = load_config(args.config, args.output_dir)
        if args.command == "run":
            art = run_experiment(cfg)
        else:
            if args.dim not in DIMENSIONS:
                raise ConfigurationError(f"unknown sweep dimension {args.dim!r}; choose from {', '.join(DIMENSIONS)}")
            art, path = sweep(cfg, args.dim)
            print(path)
        print(f"{len(art.cells)} cells ok, {len(art.failures)} failed -> {art.output_dir}")
        for f in art.failures:
            print(f"failed cell {f['cell']}: {f['error']}", file=sys.stderr)
        return EXIT_RUNTIME if art.failures else EXIT_OK
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
