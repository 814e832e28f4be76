"""Command-line entry point: ``evoshift run`` and ``evoshift check``."""
from __future__ import annotations

import argparse
import logging
import os
import sys

from .config import MODES, load_config
from .errors import EvoshiftError, ParseError, ValidationError

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


def configure_logging():
    name = os.environ.get("EVOSHIFT_LOG", "error").strip().lower()
    level = LOG_LEVELS.get(name)
    logging.basicConfig(level=level or logging.ERROR, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    if level is None:
        logging.getLogger("evoshift").error("EVOSHIFT_LOG=%r not in %s; using 'error'", name, sorted(LOG_LEVELS))


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evoshift", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the scenarios of a TOML config")
    run.add_argument("config", help="path to the TOML configuration")
    run.add_argument("--out", help="output directory (overrides output.dir)")
    run.add_argument("--jobs", type=_positive_int, default=1, help="scenarios solved concurrently")
    run.add_argument("--mode", choices=MODES, help="override scenario.mode")

    check = sub.add_parser("check", help="run the built-in acceptance suite")
    check.add_argument("--only", type=int, nargs="+", metavar="N", help="criterion numbers to run")
    check.add_argument("--jobs", type=_positive_int, default=1)
    return parser


def _cmd_run(args) -> int:
    from .runner import emit_results, run

    try:
        config = load_config(args.config)
        if args.mode:
            config = config.with_mode(args.mode)
    except ValidationError as exc:
        print("invalid configuration:", file=sys.stderr)
        for problem in exc.problems:
            print(f"  - {problem}", file=sys.stderr)
        return 2
    except (ParseError, EvoshiftError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    summary = run(config, jobs=args.jobs)
    out_dir = args.out or config.output_dir
    try:
        emit_results(summary, out_dir)
    except EvoshiftError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for res in summary.scenarios:
        status = "ok" if res.ok else f"FAILED ({res.error})"
        print(f"{res.label}: {status} [{res.seconds:.2f}s]")
    print(f"results in {out_dir}")
    return 0 if summary.ok else 1


def _cmd_check(args) -> int:
    from .acceptance import CRITERIA, format_table, run_acceptance

    unknown = [n for n in (args.only or []) if n not in CRITERIA]
    if unknown:
        print(f"unknown criteria: {unknown}", file=sys.stderr)
        return 2
    results = run_acceptance(args.only, jobs=args.jobs)
    print(format_table(results))
    return 0 if all(r.passed for r in results) else 1


def main(argv=None) -> int:
    configure_logging()
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    return _cmd_check(args)


if __name__ == "__main__":
    sys.exit(main())
