"""Acceptance gate: one test per criterion, exact tolerances, no fudging.

Each test prints an ``ACCEPTANCE PASS`` line when its criterion holds (visible
with ``pytest -s tests/test_acceptance.py`` or in the captured-output report);
a failing criterion fails its test.
"""

from __future__ import annotations

import inspect
import itertools
import json
import time
from decimal import Decimal
from fractions import Fraction
from pathlib import Path

import pytest

from mutagent.campaign import (
    CampaignConfig,
    aggregate_cost_rows,
    project_equivalents,
    run_campaign,
    run_mutant_session,
)
from mutagent.conversation import (
    DEFAULT_MAX_ITERATIONS,
    DEFAULT_TIMEOUT,
    Approach,
    ConversationState,
    SessionOutcome,
)
from mutagent.llm import ChatBackend, Live, Record, Replay
from mutagent.mutation import (
    OperatorKind,
    SubjectModule,
    apply_mutation,
    generate_mutants,
    sample_mutants,
    scan_mutation_points,
)
from mutagent.sandbox import (
    ExecutionResult,
    SandboxExecutor,
    VerdictPair,
    classify_discrepancy,
    is_kill,
    tree_checksum,
)
from mutagent.textdiff import revert_diff

from backends import (
    OracleTransport,
    ScriptedTransport,
    claim_reply,
    experiment_reply,
    find_witness,
    make_test_reply,
)
from conftest import SHIM_DIR


def _ok(name: str) -> None:
    print(f"\nACCEPTANCE PASS: {name}", flush=True)


# ---------------------------------------------------------------------------
# 1. kill-predicate truth table
# ---------------------------------------------------------------------------

def test_acceptance_kill_predicate_truth_table():
    def archetype(kind):
        if kind == "pass":
            return ExecutionResult("", "", 0, False, 0.01, 5.0)
        if kind == "fail":
            return ExecutionResult("", "", 1, False, 0.01, 5.0)
        return ExecutionResult("", "", -9, True, 5.2, 5.0)

    for b, m in itertools.product(("pass", "fail", "timeout"), repeat=2):
        baseline, mutant = archetype(b), archetype(m)
        pair = VerdictPair(baseline, mutant, classify_discrepancy(baseline, mutant))
        expected = b == "pass" and m in ("fail", "timeout")
        assert is_kill(pair) == expected, f"({b}, {m}) must be {expected}"
    _ok("kill-predicate truth table (9/9 combinations)")


# ---------------------------------------------------------------------------
# 2. paper-mutant reproduction
# ---------------------------------------------------------------------------

def test_acceptance_listing_mutations_reproduce():
    cases = [
        (
            "if received_default and len(unknown) == 0:\n    handle()\n",
            OperatorKind.COMPARISON,
            "==",
            "<=",
            "if received_default and len(unknown) <= 0:",
        ),
        (
            "for m in matches:\n    chunk = m.group(0)\n    if not chunk:\n        continue\n    use(chunk)\n",
            OperatorKind.LOOP_CONTROL,
            "continue",
            "break",
            "        break",
        ),
        (
            "doc_list.append(doc.split('\\n', 1)[0])\n",
            OperatorKind.NUMBER,
            "1",
            "2",
            "doc.split('\\n', 2)[0]",
        ),
    ]
    for source, kind, original, replacement, expected_line in cases:
        module = SubjectModule(path="listing.py", source=source)
        point = next(
            p
            for p in scan_mutation_points(module, {kind})
            if p.original_lexeme == original and p.replacement_lexeme == replacement
        )
        mutant = apply_mutation(module, point)
        assert expected_line in mutant.mutated_source
        assert revert_diff(mutant.mutated_source, mutant.diff) == source  # byte-exact
    _ok("paper-mutant reproduction (==/<=, continue/break, split limit 1/2)")


# ---------------------------------------------------------------------------
# 3. constants conformance
# ---------------------------------------------------------------------------

def test_acceptance_constant_max_iterations_is_ten(tmp_path):
    assert DEFAULT_MAX_ITERATIONS == 10
    assert ConversationState(approach=Approach.ITERATIVE).max_iterations == 10
    assert CampaignConfig(project=tmp_path, out_dir=tmp_path).max_iterations == 10
    _ok("constant: max_iterations == 10")


def test_acceptance_constant_timeout_enforced(demo_project, tmp_path):
    assert DEFAULT_TIMEOUT == 5.0
    assert CampaignConfig(project=tmp_path, out_dir=tmp_path).snippet_timeout == 5.0
    executor = SandboxExecutor(demo_project, shim_dir=SHIM_DIR, work_base=tmp_path)
    assert executor.timeout == 5.0
    start = time.monotonic()
    result = executor.run_in_fresh_workspace("import time\ntime.sleep(60)\n")
    wall = time.monotonic() - start
    assert result.timed_out
    assert result.duration >= 5.0
    assert wall <= 6.0  # 5 s limit + 1 s kill slack
    _ok("constant: snippet timeout == 5 s (enforced within +1 s slack)")


def test_acceptance_constant_flaky_runs_is_hundred(tmp_path):
    assert CampaignConfig(project=tmp_path, out_dir=tmp_path).flaky_runs == 100
    signature = inspect.signature(SandboxExecutor.flakiness_filter)
    assert signature.parameters["runs"].default == 100
    _ok("constant: flakiness filter runs == 100")


def test_acceptance_constant_sampling_cap_is_thousand(tmp_path):
    assert CampaignConfig(project=tmp_path, out_dir=tmp_path).mutant_limit == 1000
    from mutagent.cli import build_parser

    args = build_parser().parse_args(["mutate", "--project", "x", "--out", "y"])
    assert args.limit == 1000
    _ok("constant: sampling cap == 1000")


# ---------------------------------------------------------------------------
# 4. outcome taxonomy through scripted record/replay sessions
# ---------------------------------------------------------------------------

def _record_then_replay(mutant, replies, executor, store_path):
    recorded = run_mutant_session(
        mutant,
        Approach.SCIENTIFIC_0SHOT,
        ChatBackend(Record("http://unused", "scripted", store_path), transport=ScriptedTransport(replies)),
        executor,
    )
    replayed = run_mutant_session(
        mutant,
        Approach.SCIENTIFIC_0SHOT,
        ChatBackend(Replay(store_path, model="scripted")),
        executor,
    )
    assert replayed.outcome is recorded.outcome
    assert replayed.iterations_used == recorded.iterations_used
    return replayed


def test_acceptance_outcome_taxonomy(demo_mutants_by_id, executor, tmp_path):
    killable = demo_mutants_by_id["tinyutils.py::NumberReplacement::L14::0"]
    equivalent = demo_mutants_by_id["tinyutils.py::ComparisonReplacement::L7::0"]
    func, args, expected = find_witness(killable)
    args_src = ", ".join(repr(a) for a in args)
    kill_test = f"from tinyutils import {func}\nassert {func}({args_src}) == {expected!r}\n"
    probe = experiment_reply("from tinyutils import clamp\nprint(clamp(1, 0, 2))")

    success = _record_then_replay(
        killable, [probe, make_test_reply(kill_test)], executor, tmp_path / "s1.jsonl"
    )
    assert success.outcome is SessionOutcome.SUCCESS

    failed = _record_then_replay(
        killable,
        [make_test_reply("from tinyutils import clamp\nassert clamp(1, 0, 2) == 1\n")] * 10,
        executor,
        tmp_path / "s2.jsonl",
    )
    assert failed.outcome is SessionOutcome.FAILED
    assert failed.iterations_used == 10

    claimed = _record_then_replay(
        equivalent, [claim_reply()] + [probe] * 10, executor, tmp_path / "s3.jsonl"
    )
    assert claimed.outcome is SessionOutcome.CLAIMED_EQUIVALENT

    # claim at model turn 2, kill at model turn 5, one single session
    claim_kill = _record_then_replay(
        killable,
        [probe, claim_reply(), probe, probe, make_test_reply(kill_test)],
        executor,
        tmp_path / "s4.jsonl",
    )
    assert claim_kill.outcome is SessionOutcome.CLAIMED_EQUIVALENT_AND_KILLED
    assert claim_kill.claimed_equivalent_at == 2

    outcomes = {success.outcome, failed.outcome, claimed.outcome, claim_kill.outcome}
    assert outcomes == set(SessionOutcome)
    _ok("outcome taxonomy (success / failed / claimed equivalent / claimed+killed)")


# ---------------------------------------------------------------------------
# 5. cost arithmetic
# ---------------------------------------------------------------------------

TABLE_BASELINE_COSTS = [
    ("apimd", "0.612956"),
    ("codetiming", "0.023523"),
    ("dataclasses-json", "0.388398"),
    ("docstring_parser", "0.292733"),
    ("flake8", "0.523106"),
    ("flutes", "1.293902"),
    ("flutils", "0.456861"),
    ("httpie", "0.394936"),
    ("pdir2", "0.152105"),
    ("python-string-utils", "0.952624"),
]


def test_acceptance_cost_arithmetic_exact():
    rows = [(name, Decimal(cost)) for name, cost in TABLE_BASELINE_COSTS]
    total = aggregate_cost_rows(rows)
    assert total == Decimal("5.091144")  # zero tolerance

    estimate = project_equivalents(sample_killable=98, sample_size=122, remaining_flagged=742)
    assert estimate == 146
    assert abs(Fraction(24, 122) * 742 - estimate) < 1  # within integer rounding
    _ok("cost arithmetic (per-project total 5.091144 exact; projection == 146)")


# ---------------------------------------------------------------------------
# 6. end-to-end replay campaign on the bundled demo project
# ---------------------------------------------------------------------------

# Ground truth for the demo module, frozen from the brute-force grid search:
# every mutant with a distinguishing input is killable, the other three are
# equivalent (len()>=0 guard, split-limit bump, boundary >= swap).
DEMO_EQUIVALENT_IDS = {
    "tinyutils.py::ComparisonReplacement::L7::0",   # value > high  ->  value >= high
    "tinyutils.py::ComparisonReplacement::L23::1",  # len(parts) == 0  ->  <= 0
    "tinyutils.py::NumberReplacement::L22::1",      # split("\n", 1)  ->  split("\n", 2)
}


def _demo_config(project, out_dir, store, mode):
    return CampaignConfig(
        project=project,
        out_dir=out_dir,
        approach=Approach.SCIENTIFIC_0SHOT,
        mutant_limit=10,
        sampling_seed=7,
        max_iterations=5,
        flaky_runs=3,
        backend_mode=mode,
        model="oracle",
        store_path=store,
        shim_dir=SHIM_DIR,
        project_name="demo",
        parallel_sessions=2,
    )


def test_acceptance_end_to_end_replay_campaign(demo_project, demo_mutants, tmp_path):
    store = tmp_path / "replay.jsonl"

    # the brute-force grid is the independent authority on killability
    expected_killable = {m.id for m in demo_mutants if find_witness(m) is not None}
    assert expected_killable == {m.id for m in demo_mutants} - DEMO_EQUIVALENT_IDS
    assert len(demo_mutants) <= 10

    record_config = _demo_config(demo_project, tmp_path / "rec", store, "record")
    backend = ChatBackend(
        Record("http://unused", "oracle", store), transport=OracleTransport(demo_mutants)
    )
    recorded = run_campaign(record_config, backend=backend)

    replay_a = run_campaign(_demo_config(demo_project, tmp_path / "a", store, "replay"))
    replay_b = run_campaign(_demo_config(demo_project, tmp_path / "b", store, "replay"))

    bytes_a = (tmp_path / "a" / "report.json").read_bytes()
    bytes_b = (tmp_path / "b" / "report.json").read_bytes()
    assert bytes_a == bytes_b  # byte-identical reports across replay runs
    assert json.loads(bytes_a) == json.loads(recorded.to_json())

    # the oracle killed every non-equivalent mutant, and only those
    assert replay_a.outcome_counts["success"] == len(expected_killable)
    assert replay_a.outcome_counts["claimed_equivalent"] == len(DEMO_EQUIVALENT_IDS)
    assert replay_a.outcome_counts["failed"] == 0
    assert replay_a.outcome_counts["claimed_equivalent_and_killed"] == 0
    assert sum(replay_a.outcome_counts.values()) == len(demo_mutants)
    assert replay_a.killed == len(expected_killable)
    assert replay_a.mutation_score == pytest.approx(len(expected_killable) / len(demo_mutants))

    ledger = (tmp_path / "a" / "results.jsonl").read_text().splitlines()
    outcomes = {json.loads(l)["mutant_id"]: json.loads(l)["outcome"] for l in ledger}
    for mutant in demo_mutants:
        expected = "success" if mutant.id in expected_killable else "claimed_equivalent"
        assert outcomes[mutant.id] == expected, mutant.id
    _ok("end-to-end replay campaign (deterministic, oracle kills all non-equivalents)")


# ---------------------------------------------------------------------------
# 7. isolation and robustness
# ---------------------------------------------------------------------------

def test_acceptance_isolation_and_robustness(demo_project, tmp_path):
    executor = SandboxExecutor(demo_project, shim_dir=SHIM_DIR, timeout=1.0, work_base=tmp_path)
    before = tree_checksum(demo_project)
    adversarial = [
        # invalid byte output
        "import sys\nsys.stdout.buffer.write(b'\\xc3\\x28\\xff')\nsys.stdout.buffer.flush()\n",
        # writes outside its workspace
        "import os\nopen(os.path.join('..', 'escape-attempt'), 'w').write('out')\n",
        # rewrites the code under test (workspace copy only)
        "open('tinyutils.py', 'w').write('broken = True\\n')\n",
        # unbounded loop
        "while True:\n    pass\n",
        # closes stdout mid-run
        "import sys\nprint('pre')\nsys.stdout.close()\n",
    ]
    for snippet in adversarial:
        result = executor.run_in_fresh_workspace(snippet)  # must never raise
        assert result.duration < 3.0
    assert tree_checksum(demo_project) == before  # zero modifications
    _ok("isolation & robustness (adversarial snippets, checksum sweep clean)")


# ---------------------------------------------------------------------------
# 8. coverage oracle: exact match against an independent hand count
# ---------------------------------------------------------------------------

def test_acceptance_coverage_matches_hand_count(executor):
    # Independent hand count of tinyutils.py under the fixed two-test suite.
    # Statements (19): lines 1,4,5,6,7,9,12,13,14,15,16,17,18,21,22,23,24,25
    # (docstring, three defs, and every simple statement).
    # Suite executes: import (1,4,12,21); clamp(5,0,10) -> 5,7,9;
    # clamp(-3,0,10) -> 5,6; running_total([1,2]) -> 13..18; first_line("a\nb")
    # -> 22,23,25.  Covered = 17, missing = {8, 24}.
    # Branches (8): if@5, if@7, for@15, if@23, two outcomes each.
    # Taken: 5->true, 5->false, 7->false, 15->body, 15->exhaust, 23->false = 6.
    suite = [
        ("t1.py", "from tinyutils import clamp\nassert clamp(5, 0, 10) == 5\nassert clamp(-3, 0, 10) == 0\n"),
        ("t2.py", 'from tinyutils import running_total, first_line\nassert running_total([1, 2]) == [1, 3]\nassert first_line("a\\nb") == "a"\n'),
    ]
    report = executor.measure_coverage(suite)
    per_file = report.per_file["tinyutils.py"]
    assert per_file.lines_total == 19
    assert per_file.lines_covered == 17
    assert per_file.branches_total == 8
    assert per_file.branches_covered == 6
    assert report.line_percent == pytest.approx(100.0 * 17 / 19)
    assert report.branch_percent == 75.0
    _ok("coverage oracle (17/19 lines, 6/8 branches, exact)")
