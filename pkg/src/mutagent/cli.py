"""Command-line entry point.

Exit codes: 0 success, 1 domain failure (bad inputs, failed verification),
2 usage error (argparse's own convention).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .campaign import (
    ConfigError,
    ResultsLedger,
    aggregate_report,
    evaluate_suite,
    load_config,
    run_campaign,
)
from .conversation import Approach, SessionOutcome
from .errors import MutagentError
from .mutation import (
    SubjectModule,
    discover_modules,
    generate_mutants,
    load_mutants,
    sample_mutants,
    save_mutants,
)
from .sandbox import SandboxExecutor


def _cmd_mutate(args: argparse.Namespace) -> int:
    project = Path(args.project)
    if not project.is_dir():
        print(f"error: project path does not exist: {project}", file=sys.stderr)
        return 1
    mutants = []
    for rel in discover_modules(project):
        mutants.extend(generate_mutants(SubjectModule.load(project, rel)))
    sampled = sample_mutants(mutants, args.limit, args.seed)
    save_mutants(sampled, Path(args.out))
    print(f"wrote {len(sampled)} mutants (of {len(mutants)} found) to {args.out}")
    return 0


def _cmd_run(args: argparse.Namespace) -> int:
    config = load_config(Path(args.config))
    if args.approach:
        config.approach = Approach(args.approach)
    if args.backend:
        config.backend_mode = args.backend
        if config.backend_mode in ("record", "replay") and config.store_path is None:
            print("error: record/replay mode needs a store path in the config", file=sys.stderr)
            return 1
    report = run_campaign(config)
    print(report.to_text(), end="")
    print(f"ledger and artifacts under {config.out_dir}")
    return 0


def _load_suite(suite_dir: Path) -> list[tuple[str, str]]:
    return [
        (path.name, path.read_text("utf-8"))
        for path in sorted(suite_dir.glob("*.py"))
    ]


def _cmd_evaluate(args: argparse.Namespace) -> int:
    suite_dir, mutants_dir, project = Path(args.suite), Path(args.mutants), Path(args.project)
    for path, label in ((suite_dir, "suite"), (mutants_dir, "mutants"), (project, "project")):
        if not path.is_dir():
            print(f"error: {label} directory does not exist: {path}", file=sys.stderr)
            return 1
    suite = _load_suite(suite_dir)
    mutants = load_mutants(mutants_dir, project)
    executor = SandboxExecutor(project, shim_dir=args.shim_dir, timeout=args.timeout)
    if args.flaky_runs > 0:
        suite, removed = executor.flakiness_filter(suite, runs=args.flaky_runs)
        for name, run in removed:
            print(f"flaky (run {run}): {name}")
    summary = evaluate_suite(suite, mutants, executor)
    coverage = executor.measure_coverage(suite)
    print("kill matrix (x = killed):")
    for mutant_id, row in summary.kill_matrix.items():
        marks = "".join("x" if row[name] else "." for name, _ in suite)
        print(f"  {mutant_id:<60} {marks}")
    print(f"mutation score: {summary.mutation_score:.4f} ({summary.killed}/{summary.total_mutants})")
    print(f"line coverage:   {coverage.line_percent:.2f}%")
    print(f"branch coverage: {coverage.branch_percent:.2f}%")
    if summary.errors:
        print(f"execution errors on {len(summary.errors)} matrix cells", file=sys.stderr)
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    ledger_path = Path(args.ledger)
    if not ledger_path.is_file():
        print(f"error: ledger not found: {ledger_path}", file=sys.stderr)
        return 1
    ledger = ResultsLedger(ledger_path)
    results = ledger.results()
    if ledger.skipped_lines:
        print(f"warning: skipped {ledger.skipped_lines} malformed ledger lines", file=sys.stderr)
        if not results:
            print("error: every ledger line was malformed", file=sys.stderr)
            return 1
    report = aggregate_report(results, project=args.project)
    if args.format == "json":
        print(report.to_json(), end="")
    else:
        print(report.to_text(), end="")
    return 0


def _cmd_replay_verify(args: argparse.Namespace) -> int:
    ledger = ResultsLedger(Path(args.ledger))
    mutants = {m.id: m for m in load_mutants(Path(args.mutants), Path(args.project))}
    executor = SandboxExecutor(Path(args.project), shim_dir=args.shim_dir, timeout=args.timeout)
    checked = 0
    broken = 0
    for result in ledger.results():
        if result.outcome not in (SessionOutcome.SUCCESS, SessionOutcome.CLAIMED_EQUIVALENT_AND_KILLED):
            continue
        if not result.killing_test:
            print(f"BROKEN {result.mutant_id}: success without a persisted test")
            broken += 1
            continue
        mutant = mutants.get(result.mutant_id)
        if mutant is None:
            print(f"BROKEN {result.mutant_id}: mutant missing from {args.mutants}")
            broken += 1
            continue
        kill, _ = executor.is_killing_test(mutant, result.killing_test)
        checked += 1
        if not kill:
            print(f"BROKEN {result.mutant_id}: persisted test no longer kills")
            broken += 1
    print(f"re-verified {checked} killing tests, {broken} broken")
    return 1 if broken else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mutagent", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mutate", help="generate and sample mutants for a project")
    p.add_argument("--project", required=True)
    p.add_argument("--limit", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_mutate)

    p = sub.add_parser("run", help="run a campaign from a TOML config")
    p.add_argument("--config", required=True)
    p.add_argument("--approach", choices=[a.value for a in Approach])
    p.add_argument("--backend", choices=["live", "record", "replay"])
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("evaluate", help="evaluate a test suite against saved mutants")
    p.add_argument("--suite", required=True)
    p.add_argument("--mutants", required=True)
    p.add_argument("--project", required=True)
    p.add_argument("--flaky-runs", type=int, default=0)
    p.add_argument("--timeout", type=float, default=5.0)
    p.add_argument("--shim-dir", default=None)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("report", help="aggregate a results ledger into a report")
    p.add_argument("--ledger", required=True)
    p.add_argument("--format", choices=["text", "json"], default="text")
    p.add_argument("--project", default="campaign")
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("replay-verify", help="re-execute every persisted killing test")
    p.add_argument("--ledger", required=True)
    p.add_argument("--mutants", required=True)
    p.add_argument("--project", required=True)
    p.add_argument("--timeout", type=float, default=5.0)
    p.add_argument("--shim-dir", default=None)
    p.set_defaults(func=_cmd_replay_verify)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, MutagentError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
