"""Command-line entry point."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from datetime import date
from pathlib import Path

from . import pipeline
from .corpus import generate

EXIT_OK = 0
EXIT_STAGE_FAILED = 1
EXIT_CONFIG = 2


def _date(text: str) -> date:
    try:
        return date.fromisoformat(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an ISO date: {text!r}") from None


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    # flags are accepted before and after the subcommand; the subparser copies
    # must not overwrite values given before it
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", type=Path, default=default, help="flat key = value config file")
    parser.add_argument("--epoch", type=_date, default=default, help="analysis date (YYYY-MM-DD)")
    parser.add_argument("--offline", action="store_true",
                        default=argparse.SUPPRESS if suppress else False,
                        help="answer WHOIS only from the cache")
    parser.add_argument("--out", type=Path, default=default, help="output directory")
    parser.add_argument("-v", "--verbose", action="count",
                        default=argparse.SUPPRESS if suppress else 0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hijackscan",
        description="Find registry resources whose contact domains have expired and that show no activity.")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in pipeline.STAGES:
        _global_flags(sub.add_parser(name, help=f"run the {name} stage"), suppress=True)
    p = sub.add_parser("all", help="run every stage in order")
    _global_flags(p, suppress=True)
    p = sub.add_parser("run", help="run selected stages")
    _global_flags(p, suppress=True)
    p.add_argument("--all", action="store_true", help="run every stage")
    p.add_argument("--stages", default="", help="comma-separated stage names")

    p = sub.add_parser("corpus", help="write the synthetic corpus with planted ground truth")
    p.add_argument("directory", type=Path)
    p.add_argument("--seed", type=int, default=2014)

    p = sub.add_parser("bench", help="measure parser and decoder throughput")
    p.add_argument("--objects", type=int, default=200_000)
    p.add_argument("--mrt-mb", type=float, default=50.0)
    p.add_argument("--min-objects-per-s", type=float, default=100_000)
    p.add_argument("--min-mb-per-min", type=float, default=200.0)
    return parser


def _stages(args) -> list[str]:
    if args.command == "all":
        return list(pipeline.STAGES)
    if args.command == "run":
        if args.all:
            return list(pipeline.STAGES)
        names = [s.strip() for s in args.stages.split(",") if s.strip()]
        unknown = set(names) - set(pipeline.STAGES)
        if not names or unknown:
            raise pipeline.ConfigError(f"choose stages from {', '.join(pipeline.STAGES)}")
        return names
    return [args.command]


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(getattr(args, "verbose", 0), 2),
                        format="%(levelname)s %(name)s: %(message)s")

    if args.command == "corpus":
        expected = generate(args.directory, args.seed)
        print(json.dumps(expected["cascade"], indent=2))
        return EXIT_OK
    if args.command == "bench":
        from .bench import run_bench

        result = run_bench(objects=args.objects, mrt_mb=args.mrt_mb,
                           min_objects_per_s=args.min_objects_per_s, min_mb_per_min=args.min_mb_per_min)
        print(json.dumps(result, indent=2))
        return EXIT_OK if result["ok"] else EXIT_STAGE_FAILED

    try:
        config = pipeline.load_config(args.config)
        if args.epoch is not None:
            config.epoch = args.epoch
        if args.offline:
            config.whois.offline = True
        if args.out is not None:
            config.out_dir = args.out
        report = pipeline.run(config, _stages(args))
    except pipeline.ConfigError as exc:
        print(f"hijackscan: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for finding in report.findings:
        print(f"finding: {finding}", file=sys.stderr)
    if not report.ok:
        print(f"hijackscan: stage {report.failed_stage} failed: {report.error}", file=sys.stderr)
        return EXIT_STAGE_FAILED
    if report.summary is not None:
        print(json.dumps(report.summary["verdicts"], sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
