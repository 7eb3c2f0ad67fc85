#!/usr/bin/env python3
"""
cli.py — Command-line entry point for the name-generation bias audit.

Commands:
  run       probe every plan task, resolve names, score, write reports
  resume    continue a run from its run log (config hash must match)
  report    re-score a run log offline and re-emit reports
  validate  load config + data files and print the plan size
  fixture   write a synthetic replay fixture (config, registry, trace)

Exit codes: 0 success, 1 partial run or runtime error, 2 invalid input.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from dotenv import load_dotenv

from .config import load_config
from .errors import SanjehError, ValidationError
from .genderres import load_registry
from .runlog import load_run_log
from .runner import AuditRun, RunOutcome

log = logging.getLogger("sanjeh")

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_INVALID = 2


def _configure_logging(quiet: bool, verbose: bool) -> None:
    level = logging.WARNING if quiet else logging.DEBUG if verbose else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)-7s %(name)s: %(message)s",
                        stream=sys.stderr)


def _mark(ok: bool) -> str:
    return "✓" if ok else "✗"


def print_summary(run: AuditRun, outcome: RunOutcome, title: str, out_dir: Path) -> None:
    cov = outcome.meta.get("coverage", {})
    totals = cov.get("totals", {})
    print("\n" + "=" * 70)
    print(f"  {title}")
    print("=" * 70)
    print(f"  Config hash          : {run.config_hash[:16]}")
    print(f"  Catalog version      : {run.catalog.version}")
    print(f"  Models               : {', '.join(m.model_id for m in run.config.models)}")
    print(f"  Languages            : {', '.join(run.config.languages)}")
    print(f"  Planned tasks        : {outcome.plan_size}")
    print(f"  Records              : {len(outcome.records)} ({outcome.new_records} new)")
    print(f"  Valid names          : {totals.get('valid', 0)}")
    print(f"  Failed generations   : {totals.get('failed', 0)}")
    print(f"  Unresolved names     : {totals.get('unresolved', 0)}")
    for lang, row in sorted(cov.get("languages", {}).items()):
        rate = row.get("disagreement_rate")
        shown = "n/a" if rate is None else f"{float(rate) * 100:.2f}%"
        print(f"  Disagreement ({lang})    : {shown} of {row.get('unique_names', 0)} names")
    print(f"  {_mark(not outcome.aborted)} Aborted tasks      : {len(outcome.aborted)}")
    print(f"  {_mark(not outcome.unresolved)} Oracle failures    : {len(outcome.unresolved)}")
    print("=" * 70)

    missing = outcome.meta.get("missing_tasks", [])
    if missing:
        shown = missing[:20]
        print("  Missing task keys:")
        for key in shown:
            print(f"    {key}")
        if len(missing) > len(shown):
            print(f"    … {len(missing) - len(shown)} more")
    print(f"  Reports written to {out_dir}/\n")


# ── commands ────────────────────────────────────────────────────────────

def cmd_run(args: argparse.Namespace) -> int:
    run = AuditRun(load_config(args.config))
    outcome = run.run()
    print_summary(run, outcome, "AUDIT RUN SUMMARY", run.config.out_dir)
    return EXIT_OK if outcome.complete else EXIT_PARTIAL


def cmd_resume(args: argparse.Namespace) -> int:
    run = AuditRun(load_config(args.config))
    outcome = run.resume(args.log)
    print_summary(run, outcome, "AUDIT RUN SUMMARY (resumed)", run.config.out_dir)
    return EXIT_OK if outcome.complete else EXIT_PARTIAL


def cmd_report(args: argparse.Namespace) -> int:
    loaded = load_run_log(args.log)
    if not loaded.records:
        raise SanjehError(f"run log has no generation records: {args.log}")
    run = AuditRun(loaded.run_config())
    gold = load_registry(args.gold) if args.gold else None
    outcome = run.report_from_log(loaded, args.out, gold=gold)
    print_summary(run, outcome, "AUDIT REPORT (from run log)", args.out)
    missing = outcome.meta.get("missing_tasks", [])
    if missing:
        log.warning("run log is incomplete: %d planned tasks have no completed record",
                    len(missing))
        return EXIT_PARTIAL
    return EXIT_OK if outcome.complete else EXIT_PARTIAL


def cmd_validate(args: argparse.Namespace) -> int:
    run = AuditRun(load_config(args.config))
    print(f"  {_mark(True)} config            : {args.config}")
    print(f"  {_mark(True)} catalog           : {run.catalog.version} "
          f"({len(run.catalog.categories)} categories)")
    print(f"  {_mark(True)} templates         : {len(run.templates)}")
    print(f"  {_mark(True)} registry          : {len(run.registry)} names "
          f"({run.registry.provenance})")
    print(f"  {_mark(True)} plan              : {len(run.plan)} tasks")
    return EXIT_OK


def cmd_fixture(args: argparse.Namespace) -> int:
    from .synthetic import build_synthetic_fixture

    fixture = build_synthetic_fixture(args.out, trials=args.trials)
    print(f"  Synthetic fixture written; run it with:\n"
          f"    python -m sanjeh run --config {fixture.config_path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sanjeh",
                                description="Gender-bias audit of LLM name generation")
    noise = p.add_mutually_exclusive_group()
    noise.add_argument("--quiet", action="store_true", help="warnings and errors only")
    noise.add_argument("--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("run", help="probe, resolve, score and report")
    s.add_argument("--config", required=True, type=Path)
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("resume", help="continue a run from its run log")
    s.add_argument("--config", required=True, type=Path)
    s.add_argument("--log", required=True, type=Path)
    s.set_defaults(func=cmd_resume)

    s = sub.add_parser("report", help="re-score a run log without network access")
    s.add_argument("--log", required=True, type=Path)
    s.add_argument("--out", required=True, type=Path)
    s.add_argument("--gold", type=Path, default=None,
                   help="name<TAB>gender file for oracle accuracy")
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("validate", help="check config and data files")
    s.add_argument("--config", required=True, type=Path)
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("fixture", help="write a synthetic replay fixture")
    s.add_argument("--out", required=True, type=Path)
    s.add_argument("--trials", type=int, default=10)
    s.set_defaults(func=cmd_fixture)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_dotenv()  # API keys named by api_key_env may live in a local .env
    args = build_parser().parse_args(argv)
    _configure_logging(args.quiet, args.verbose)
    try:
        return args.func(args)
    except ValidationError as e:
        log.error("%s", e)
        return EXIT_INVALID
    except SanjehError as e:
        log.error("%s", e)
        return EXIT_PARTIAL


if __name__ == "__main__":
    sys.exit(main())
