"""Command-line surface: validate, generate, diagnose, report.

stdout carries exactly one JSON document per command; logging goes to
stderr. Exit codes: 0 success, 1 input-validation failure, 2 generation
failure, 3 flagged regions under --strict, 64 usage or configuration
errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys

from . import __version__
from .diagnostics import report_from_json, report_to_json
from .ingest import InputError
from .pipeline import (
    ConfigError,
    GenerationConfig,
    GenerationError,
    ValidationFailed,
    diagnose_run,
    generate_ecosystem,
    render_report_files,
    validate_inputs,
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_GENERATION = 2
EXIT_FLAGGED = 3
EXIT_USAGE = 64

logger = logging.getLogger(__name__)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def build_parser() -> _Parser:
    parser = _Parser(
        prog="popforge",
        description="Generate and verify synthetic populations and ecosystems.",
    )
    parser.add_argument("--version", action="version", version=f"popforge {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    commands = {
        "validate": "check all configured inputs and print a rule-by-rule report",
        "generate": "generate every region and write the output files",
        "diagnose": "compare a finished run against the truth marginals",
        "report": "render diagnostics to report.md plus per-region maps",
    }
    for name, help_text in commands.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="path to the run config JSON")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--jobs", type=int, help="override the parallelism degree")
        p.add_argument("--out", help="override the output directory")
        p.add_argument("--strict", action="store_true", help="fail fast / fail hard")
        p.add_argument(
            "-v", "--verbose", action="count", default=0,
            help="more logging on stderr (-v info, -vv debug)",
        )
    return parser


def _emit(doc: dict) -> None:
    json.dump(doc, sys.stdout, sort_keys=True, indent=2)
    sys.stdout.write("\n")


def _load_config(args) -> GenerationConfig:
    cfg = GenerationConfig.from_json(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.jobs is not None:
        overrides["parallelism"] = args.jobs
    if args.out is not None:
        overrides["output_dir"] = os.path.abspath(args.out)
    if args.strict:
        overrides["strict"] = True
    return dataclasses.replace(cfg, **overrides) if overrides else cfg


def _cmd_validate(cfg: GenerationConfig) -> int:
    report, _ = validate_inputs(cfg)
    _emit({"command": "validate", **report.to_dict()})
    return EXIT_OK if report.ok else EXIT_VALIDATION


def _cmd_generate(cfg: GenerationConfig) -> int:
    try:
        summary = generate_ecosystem(cfg)
    except ValidationFailed as exc:
        _emit({"command": "generate", "ok": False, **exc.report.to_dict()})
        return EXIT_VALIDATION
    except GenerationError as exc:
        logger.error("%s", exc)
        _emit({"command": "generate", "ok": False, "error": str(exc)})
        return EXIT_GENERATION
    _emit({"command": "generate", "ok": True, **summary})
    if summary["regions"] and len(summary["failed"]) == len(summary["regions"]):
        return EXIT_GENERATION
    return EXIT_OK


def _cmd_diagnose(cfg: GenerationConfig) -> int:
    report = diagnose_run(cfg)
    path = os.path.join(cfg.output_dir, "diagnostics.json")
    with open(path, "w") as fh:
        fh.write(report_to_json(report))
    _emit(
        {
            "command": "diagnose",
            "diagnostics": path,
            "regions": len(report.regions),
            "flagged_regions": report.flagged_regions,
        }
    )
    if report.flagged_regions and cfg.strict:
        return EXIT_FLAGGED
    return EXIT_OK


def _cmd_report(cfg: GenerationConfig) -> int:
    path = os.path.join(cfg.output_dir, "diagnostics.json")
    if os.path.exists(path):
        with open(path) as fh:
            report = report_from_json(fh.read())
    else:
        report = diagnose_run(cfg)
    files = render_report_files(cfg, report)
    _emit({"command": "report", "files": files})
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"popforge: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE

    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(stream=sys.stderr, level=level, format="%(levelname)s %(name)s: %(message)s")

    try:
        cfg = _load_config(args)
    except ConfigError as exc:
        print(f"popforge: {exc}", file=sys.stderr)
        return EXIT_USAGE

    try:
        if args.command == "validate":
            return _cmd_validate(cfg)
        if args.command == "generate":
            return _cmd_generate(cfg)
        if args.command == "diagnose":
            return _cmd_diagnose(cfg)
        return _cmd_report(cfg)
    except ConfigError as exc:
        print(f"popforge: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InputError as exc:
        print(f"popforge: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
