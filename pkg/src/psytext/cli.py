"""Command line interface.

Subcommands mirror the workflow stages: validate | score | reliability
| validity | simulate | report. Every subcommand takes --config PATH;
--seed overrides the config's master seed. Exit codes: 0 success, 1
validation failure, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, load_config
from .errors import PsytextError
from .pipeline import (
    stage_report,
    stage_reliability,
    stage_score,
    stage_simulate,
    stage_validate,
    stage_validity,
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2

STAGES = ("validate", "score", "reliability", "validity", "simulate", "report")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="psytext",
        description="Score text corpora with LLM raters and assess the ratings "
        "for reliability and criterion validity.",
    )
    parser.add_argument("--seed", type=int, default=None, help="override the config's master seed")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in STAGES:
        p = sub.add_parser(name, help=f"run the {name} stage")
        p.add_argument("--config", required=True, help="path to the run configuration YAML")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )

    try:
        config = load_config(args.config, seed_override=args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    try:
        if args.command == "validate":
            summary = stage_validate(config)
            for msg in summary.messages:
                print(msg)
            if not summary.ok:
                print("validation FAILED", file=sys.stderr)
                return EXIT_VALIDATION
            print("validation clean")
            return EXIT_OK

        if args.command == "score":
            result = stage_score(config)
            _print_score(result)
            return EXIT_OK

        if args.command == "simulate":
            result = stage_simulate(config)
            print(f"synthetic bundle written to {config.output}/simulated")
            _print_score(result)
            return EXIT_OK

        if args.command == "reliability":
            report = stage_reliability(config)
            print(f"retained factors: {report.retained_factor_count}")
            for f in report.factors:
                alpha = "undefined" if f.alpha is None else f"{f.alpha:.4f}"
                print(f"factor {f.factor_id}: alpha={alpha} omega={f.omega:.4f}")
            flagged = report.flagged_items()
            if flagged:
                print(f"flagged items: {', '.join(flagged)}")
            return EXIT_OK

        if args.command == "validity":
            doc = stage_validity(config)
            for banner in doc["decisions"]:
                if banner.startswith("WARNING"):
                    print(banner, file=sys.stderr)
            for e in doc["entries"]:
                sign = "" if e["sign_consistent"] is None else (
                    " sign-consistent" if e["sign_consistent"] else " SIGN-INCONSISTENT"
                )
                print(
                    f"{e['factor_id']} x {e['criterion']}: r={e['r_raw']:.4f} "
                    f"(n={e['n_overlap']}){sign}"
                )
            return EXIT_OK

        if args.command == "report":
            path = stage_report(config)
            print(f"report written to {path}")
            return EXIT_OK

    except PsytextError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    raise AssertionError("unreachable")


def _print_score(result) -> None:
    print(
        f"records: {result.n_records} "
        f"(ok={result.counts['ok']}, parse_failed={result.counts['parse_failed']}, "
        f"provider_error={result.counts['provider_error']})"
    )
    print(f"provider calls: {result.provider_calls}")
    print(f"split: {result.n_development} development / {result.n_holdout} holdout")


if __name__ == "__main__":
    sys.exit(main())
