"""End-to-end campaign driving: sessions, suites, scores, reports.

One campaign = one subject tree + one approach.  Sessions append to a JSONL
results ledger as they complete, so an interrupted campaign resumes without
re-querying the backend for finished mutants.  All money stays Decimal.
"""

from __future__ import annotations

import json
import shutil
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction
from pathlib import Path

from . import conversation as conv
from .conversation import Approach, ConversationState, Phase, SessionOutcome
from .errors import (
    IllegalPhase,
    MutagentError,
    ProviderError,
    ReplayMiss,
    SessionAborted,
    TransportError,
)
from .llm import ChatBackend, Live, PriceTable, Record, Replay, TokenUsage, estimate_cost
from .mutation import (
    ALL_KINDS,
    Mutant,
    OperatorKind,
    SubjectModule,
    discover_modules,
    generate_mutants,
    sample_mutants,
    sanitize_id,
    save_mutants,
)
from .parsing import parse_response
from .sandbox import CoverageReport, SandboxExecutor

DEFAULT_PRICES = PriceTable(
    cached_rate=Decimal("0.075"),
    uncached_rate=Decimal("0.15"),
    completion_rate=Decimal("0.60"),
)


# ---------------------------------------------------------------------------
# Config
# ---------------------------------------------------------------------------

@dataclass
class CampaignConfig:
    project: Path
    out_dir: Path
    approach: Approach = Approach.SCIENTIFIC_0SHOT
    mutant_limit: int = 1000
    sampling_seed: int = 0
    max_iterations: int = 10
    snippet_timeout: float = 5.0
    flaky_runs: int = 100
    parallel_sessions: int = 0  # 0 = auto: 1 live/record, cpu count replay
    modules: list[str] | None = None
    operator_kinds: frozenset[OperatorKind] = ALL_KINDS
    backend_mode: str = "replay"  # live | record | replay
    endpoint: str = "https://api.openai.com"
    model: str = "gpt-4o-mini"
    store_path: Path | None = None
    api_key_env: str = "OPENAI_API_KEY"
    sampling_params: dict = field(default_factory=dict)
    rate_limit_rpm: float | None = None
    prices: PriceTable = DEFAULT_PRICES
    shim_dir: Path | None = None
    project_name: str = ""

    def __post_init__(self):
        self.project = Path(self.project)
        self.out_dir = Path(self.out_dir)
        if not self.project_name:
            self.project_name = self.project.name

    def effective_parallelism(self) -> int:
        if self.parallel_sessions > 0:
            return self.parallel_sessions
        if self.backend_mode == "replay":
            import os

            return os.cpu_count() or 1
        return 1


class ConfigError(MutagentError):
    """The campaign config file is unusable."""


def load_config(path: Path) -> CampaignConfig:
    """Read a TOML campaign config into a CampaignConfig."""
    try:
        import tomllib  # py >= 3.11
    except ImportError:
        import tomli as tomllib
    path = Path(path)
    try:
        with path.open("rb") as fh:
            doc = tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc

    camp = doc.get("campaign", {})
    backend = doc.get("backend", {})
    prices = doc.get("prices", {})
    shim = doc.get("shim", {})
    base = path.parent

    def _resolve(value: str | None) -> Path | None:
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else base / p

    try:
        config = CampaignConfig(
            project=_resolve(camp["project"]),
            out_dir=_resolve(camp.get("out_dir", "campaign-out")),
            approach=Approach(camp.get("approach", "scientific-0shot")),
            mutant_limit=int(camp.get("mutant_limit", 1000)),
            sampling_seed=int(camp.get("sampling_seed", 0)),
            max_iterations=int(camp.get("max_iterations", 10)),
            snippet_timeout=float(camp.get("snippet_timeout", 5.0)),
            flaky_runs=int(camp.get("flaky_runs", 100)),
            parallel_sessions=int(camp.get("parallel_sessions", 0)),
            modules=list(camp["modules"]) if "modules" in camp else None,
            backend_mode=str(backend.get("mode", "replay")),
            endpoint=str(backend.get("endpoint", "https://api.openai.com")),
            model=str(backend.get("model", "gpt-4o-mini")),
            store_path=_resolve(backend.get("store")),
            api_key_env=str(backend.get("api_key_env", "OPENAI_API_KEY")),
            sampling_params=dict(backend.get("sampling_params", {})),
            rate_limit_rpm=float(backend["rate_limit_rpm"]) if "rate_limit_rpm" in backend else None,
            prices=PriceTable(
                cached_rate=Decimal(str(prices.get("cached_prompt", "0.075"))),
                uncached_rate=Decimal(str(prices.get("uncached_prompt", "0.15"))),
                completion_rate=Decimal(str(prices.get("completion", "0.60"))),
            ),
            shim_dir=_resolve(shim.get("dir")),
            project_name=str(camp.get("project_name", "")),
        )
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if config.backend_mode not in ("live", "record", "replay"):
        raise ConfigError(f"unknown backend mode: {config.backend_mode}")
    if config.backend_mode in ("record", "replay") and config.store_path is None:
        raise ConfigError(f"backend mode {config.backend_mode} needs a store path")
    return config


def make_backend(config: CampaignConfig, transport=None) -> ChatBackend:
    """Build the chat backend the config describes; *transport* overrides HTTP."""
    from .llm import api_key_from_env

    if config.backend_mode == "replay":
        mode = Replay(store_path=config.store_path, model=config.model)
        return ChatBackend(mode, params=config.sampling_params)
    if config.backend_mode == "record":
        mode = Record(endpoint=config.endpoint, model=config.model, store_path=config.store_path)
    else:
        mode = Live(endpoint=config.endpoint, model=config.model)
    api_key = api_key_from_env(config.api_key_env)
    if transport is None and not api_key:
        raise ConfigError(
            f"backend mode {config.backend_mode} needs an API key; set {config.api_key_env}"
        )
    return ChatBackend(
        mode,
        api_key=api_key,
        params=config.sampling_params,
        rate_limit_rpm=config.rate_limit_rpm,
        transport=transport,
    )


# ---------------------------------------------------------------------------
# Session results and the ledger
# ---------------------------------------------------------------------------

@dataclass
class SessionResult:
    mutant_id: str
    approach: Approach
    outcome: SessionOutcome
    iterations_used: int
    killing_test: str | None
    usage: TokenUsage
    cost: Decimal
    transcript: str | None = None
    claimed_equivalent_at: int | None = None

    def as_dict(self) -> dict:
        return {
            "mutant_id": self.mutant_id,
            "approach": self.approach.value,
            "outcome": self.outcome.value,
            "iterations_used": self.iterations_used,
            "killing_test": self.killing_test,
            "usage": self.usage.as_dict(),
            "cost": str(self.cost),
            "transcript": self.transcript,
            "claimed_equivalent_at": self.claimed_equivalent_at,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SessionResult":
        return cls(
            mutant_id=data["mutant_id"],
            approach=Approach(data["approach"]),
            outcome=SessionOutcome(data["outcome"]),
            iterations_used=int(data["iterations_used"]),
            killing_test=data.get("killing_test"),
            usage=TokenUsage.from_dict(data.get("usage", {})),
            cost=Decimal(data.get("cost", "0")),
            transcript=data.get("transcript"),
            claimed_equivalent_at=data.get("claimed_equivalent_at"),
        )


class ResultsLedger:
    """Append-only JSONL of session results; the resumability anchor."""

    def __init__(self, path: Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._results: dict[tuple[str, str], SessionResult] = {}
        self.skipped_lines = 0
        if self.path.exists():
            for raw in self.path.read_text("utf-8").splitlines():
                if not raw.strip():
                    continue
                try:
                    result = SessionResult.from_dict(json.loads(raw))
                except (json.JSONDecodeError, KeyError, ValueError):
                    self.skipped_lines += 1
                    continue
                self._results.setdefault((result.mutant_id, result.approach.value), result)

    def has(self, mutant_id: str, approach: Approach) -> bool:
        return (mutant_id, approach.value) in self._results

    def append(self, result: SessionResult) -> None:
        with self._lock:
            key = (result.mutant_id, result.approach.value)
            if key in self._results:
                return
            self._results[key] = result
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(result.as_dict(), sort_keys=True) + "\n")

    def results(self) -> list[SessionResult]:
        return sorted(self._results.values(), key=lambda r: (r.approach.value, r.mutant_id))


def write_transcript(state: ConversationState, path: Path, meta: dict | None = None) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        if meta is not None:
            # header line in the same {role, text, iteration, timestamp} shape,
            # carrying the model name and sampling parameters used
            fh.write(
                json.dumps(
                    {
                        "role": "meta",
                        "text": json.dumps(meta, sort_keys=True),
                        "iteration": 0,
                        "timestamp": state.turns[0].timestamp if state.turns else 0.0,
                    },
                    sort_keys=True,
                )
                + "\n"
            )
        for turn in state.turns:
            fh.write(
                json.dumps(
                    {
                        "role": turn.role,
                        "text": turn.text,
                        "iteration": turn.iteration,
                        "timestamp": turn.timestamp,
                    },
                    sort_keys=True,
                    ensure_ascii=False,
                )
                + "\n"
            )


# ---------------------------------------------------------------------------
# One session
# ---------------------------------------------------------------------------

def classify_outcome(state: ConversationState, verified_kill: bool) -> SessionOutcome:
    """The four-way outcome taxonomy for a finished session."""
    if state.phase is not Phase.FINISHED:
        raise IllegalPhase("classify_outcome needs a finished session")
    return conv.outcome_from(state.claimed, verified_kill)


def run_mutant_session(
    mutant: Mutant,
    approach: Approach,
    backend: ChatBackend,
    executor: SandboxExecutor,
    max_iterations: int = conv.DEFAULT_MAX_ITERATIONS,
    timeout: float = conv.DEFAULT_TIMEOUT,
    prices: PriceTable | None = None,
    transcript_path: Path | None = None,
) -> SessionResult:
    """Drive one conversation to a Finish and return its result.

    On Success the recorded test is re-executed once before being trusted;
    a test that does not kill on re-execution is treated like any failed
    attempt.
    """
    state = conv.new_session(approach, mutant.module, mutant, max_iterations, timeout)
    meta = {"model": backend.model, "params": backend.params, "mutant": mutant.id}
    usage_total = TokenUsage()
    killing_test: str | None = None
    # hard stop: one execution plus at most REPROMPT_BUDGET + 1 model turns each
    turn_guard = (conv.REPROMPT_BUDGET + 2) * max_iterations + 4

    while state.phase is not Phase.FINISHED:
        turn_guard -= 1
        if turn_guard <= 0:
            state.finish(conv.outcome_from(state.claimed, False))
            break
        try:
            text, usage = backend.complete(state.messages())
        except (TransportError, ProviderError, ReplayMiss) as exc:
            if transcript_path is not None:
                write_transcript(state, transcript_path, meta=meta)
            raise SessionAborted(f"{mutant.id}: {exc}") from exc
        usage_total = usage_total + usage
        state.add_turn("assistant", text)
        action = conv.next_action(state, msg=parse_response(text))

        if isinstance(action, (conv.RunExperiment, conv.RunTest)):
            verdict = executor.run_pair(mutant, action.code, timeout)
            conv.record_execution(state, verdict)
            followup = conv.next_action(state, verdict=verdict)
            if isinstance(followup, conv.Finish):
                killed = followup.outcome in (
                    SessionOutcome.SUCCESS,
                    SessionOutcome.CLAIMED_EQUIVALENT_AND_KILLED,
                )
                if killed:
                    verified, _ = executor.is_killing_test(mutant, action.code, timeout)
                    if verified:
                        killing_test = action.code
                        state.finish(followup.outcome)
                    elif approach.single_shot or state.iteration >= max_iterations:
                        state.finish(conv.outcome_from(state.claimed, False))
                    else:
                        state.add_turn(
                            "user",
                            conv.render_execution_feedback(verdict)
                            + "\n"
                            + conv.render_followup(was_test=True),
                        )
                else:
                    state.finish(followup.outcome)
            else:
                was_test = isinstance(action, conv.RunTest)
                state.add_turn(
                    "user",
                    conv.render_execution_feedback(verdict)
                    + "\n"
                    + conv.render_followup(was_test=was_test),
                )
        elif isinstance(action, conv.Finish):
            state.finish(action.outcome)
        else:
            state.add_turn("user", conv.render_reprompt(action))

    if transcript_path is not None:
        write_transcript(state, transcript_path, meta=meta)
    cost = estimate_cost(usage_total, prices) if prices is not None else Decimal(0)
    return SessionResult(
        mutant_id=mutant.id,
        approach=approach,
        outcome=state.outcome or SessionOutcome.FAILED,
        iterations_used=max(1, state.iteration),
        killing_test=killing_test,
        usage=usage_total,
        cost=cost,
        transcript=str(transcript_path) if transcript_path else None,
        claimed_equivalent_at=state.claimed_equivalent_at,
    )


# ---------------------------------------------------------------------------
# Suite evaluation
# ---------------------------------------------------------------------------

@dataclass
class EvaluationSummary:
    mutation_score: float
    killed: int
    total_mutants: int
    test_count: int
    kill_matrix: dict[str, dict[str, bool]]
    errors: dict[str, str] = field(default_factory=dict)


def compute_mutation_score(
    suite: list[tuple[str, str]],
    mutants: list[Mutant],
    executor: SandboxExecutor,
    timeout: float | None = None,
    errors: dict[str, str] | None = None,
) -> tuple[float, dict[str, dict[str, bool]]]:
    """Full kill matrix and score of a (flakiness-filtered) suite.

    A mutant counts as killed when any test in the suite kills it.  Per-cell
    execution errors are recorded into *errors* (as not-killed) without
    aborting the rest of the matrix.
    """
    matrix: dict[str, dict[str, bool]] = {}
    killed = 0
    for mutant in sorted(mutants, key=lambda m: m.id):
        row: dict[str, bool] = {}
        for name, code in suite:
            try:
                kill, _ = executor.is_killing_test(mutant, code, timeout)
            except MutagentError as exc:
                if errors is not None:
                    errors[f"{mutant.id}::{name}"] = str(exc)
                kill = False
            row[name] = kill
        matrix[mutant.id] = row
        if any(row.values()):
            killed += 1
    score = killed / len(mutants) if mutants else 0.0
    return score, matrix


def evaluate_suite(
    suite: list[tuple[str, str]],
    mutants: list[Mutant],
    executor: SandboxExecutor,
    timeout: float | None = None,
) -> EvaluationSummary:
    errors: dict[str, str] = {}
    score, matrix = compute_mutation_score(suite, mutants, executor, timeout, errors=errors)
    killed = sum(1 for row in matrix.values() if any(row.values()))
    return EvaluationSummary(
        mutation_score=score,
        killed=killed,
        total_mutants=len(mutants),
        test_count=len(suite),
        kill_matrix=matrix,
        errors=errors,
    )


# ---------------------------------------------------------------------------
# Reporting
# ---------------------------------------------------------------------------

def aggregate_cost_rows(rows: list[tuple[str, Decimal]]) -> Decimal:
    """Exact total of per-project cost rows."""
    total = Decimal(0)
    for _, cost in rows:
        total += Decimal(cost)
    return total


def project_equivalents(sample_killable: int, sample_size: int, remaining_flagged: int) -> int:
    """Estimate how many still-flagged mutants are truly equivalent.

    Scales the sample's equivalent fraction (sample_size - sample_killable)
    / sample_size up to the remaining flagged population, with exact
    fraction arithmetic before the final rounding.
    """
    if sample_size <= 0:
        raise ValueError("sample_size must be positive")
    if not 0 <= sample_killable <= sample_size:
        raise ValueError("sample_killable must be within the sample")
    return round(Fraction(sample_size - sample_killable, sample_size) * remaining_flagged)


@dataclass
class CampaignReport:
    approach: str
    project: str
    sessions: int
    outcome_counts: dict[str, int]
    iteration_histogram: dict[int, int]
    total_usage: TokenUsage
    total_cost: Decimal
    project_costs: list[tuple[str, Decimal]]
    mutation_score: float | None = None
    killed: int | None = None
    total_mutants: int | None = None
    test_count: int | None = None
    line_percent: float | None = None
    branch_percent: float | None = None
    aborted_sessions: int = 0

    def as_dict(self) -> dict:
        return {
            "approach": self.approach,
            "project": self.project,
            "sessions": self.sessions,
            "outcome_counts": dict(sorted(self.outcome_counts.items())),
            "iteration_histogram": {str(k): v for k, v in sorted(self.iteration_histogram.items())},
            "usage": self.total_usage.as_dict(),
            "total_cost": str(self.total_cost),
            "project_costs": [[name, str(cost)] for name, cost in self.project_costs],
            "mutation_score": self.mutation_score,
            "killed": self.killed,
            "total_mutants": self.total_mutants,
            "test_count": self.test_count,
            "line_percent": self.line_percent,
            "branch_percent": self.branch_percent,
            "aborted_sessions": self.aborted_sessions,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        lines = [
            f"campaign report: {self.project} / {self.approach}",
            f"  sessions:        {self.sessions}",
        ]
        for name in sorted(self.outcome_counts):
            lines.append(f"  {name + ':':<17}{self.outcome_counts[name]}")
        if self.mutation_score is not None:
            lines.append(f"  mutation score:  {self.mutation_score:.4f} ({self.killed}/{self.total_mutants})")
        if self.line_percent is not None:
            lines.append(f"  line coverage:   {self.line_percent:.2f}%")
        if self.branch_percent is not None:
            lines.append(f"  branch coverage: {self.branch_percent:.2f}%")
        if self.test_count is not None:
            lines.append(f"  tests in suite:  {self.test_count}")
        lines.append(f"  tokens:          {self.total_usage.total}")
        lines.append(f"  total cost:      ${self.total_cost}")
        hist = " ".join(f"{k}:{v}" for k, v in sorted(self.iteration_histogram.items()) if v)
        lines.append(f"  iterations used: {hist or '-'}")
        if self.aborted_sessions:
            lines.append(f"  aborted:         {self.aborted_sessions}")
        return "\n".join(lines) + "\n"


def aggregate_report(
    results: list[SessionResult],
    coverage: CoverageReport | None = None,
    evaluation: EvaluationSummary | None = None,
    project: str = "campaign",
    max_iterations: int = conv.DEFAULT_MAX_ITERATIONS,
    aborted_sessions: int = 0,
) -> CampaignReport:
    """Fold session results plus suite evaluation into one report."""
    ordered = sorted(results, key=lambda r: r.mutant_id)
    outcome_counts = {outcome.value: 0 for outcome in SessionOutcome}
    histogram = {i: 0 for i in range(1, max_iterations + 1)}
    usage = TokenUsage()
    total = Decimal(0)
    for result in ordered:
        outcome_counts[result.outcome.value] += 1
        histogram[min(max(result.iterations_used, 1), max_iterations)] += 1
        usage = usage + result.usage
        total += result.cost
    approaches = sorted({r.approach.value for r in ordered})
    report = CampaignReport(
        approach=approaches[0] if len(approaches) == 1 else ",".join(approaches) or "-",
        project=project,
        sessions=len(ordered),
        outcome_counts=outcome_counts,
        iteration_histogram=histogram,
        total_usage=usage,
        total_cost=aggregate_cost_rows([(project, total)]),
        project_costs=[(project, total)],
        aborted_sessions=aborted_sessions,
    )
    if evaluation is not None:
        report.mutation_score = evaluation.mutation_score
        report.killed = evaluation.killed
        report.total_mutants = evaluation.total_mutants
        report.test_count = evaluation.test_count
    if coverage is not None:
        report.line_percent = coverage.line_percent
        report.branch_percent = coverage.branch_percent
    return report


# ---------------------------------------------------------------------------
# The campaign
# ---------------------------------------------------------------------------

def collect_suite(results: list[SessionResult]) -> list[tuple[str, str]]:
    """Killing tests as suite files, byte-identical duplicates dropped."""
    suite: list[tuple[str, str]] = []
    seen: set[str] = set()
    for result in sorted(results, key=lambda r: r.mutant_id):
        if result.killing_test and result.killing_test not in seen:
            seen.add(result.killing_test)
            suite.append((f"{sanitize_id(result.mutant_id)}.py", result.killing_test))
    return suite


def generate_campaign_mutants(config: CampaignConfig) -> list[Mutant]:
    modules = config.modules if config.modules is not None else discover_modules(config.project)
    all_mutants: list[Mutant] = []
    for rel in modules:
        module = SubjectModule.load(config.project, rel)
        all_mutants.extend(generate_mutants(module, config.operator_kinds))
    return sample_mutants(all_mutants, config.mutant_limit, config.sampling_seed)


def run_campaign(
    config: CampaignConfig,
    backend: ChatBackend | None = None,
    executor: SandboxExecutor | None = None,
) -> CampaignReport:
    """mutate -> sample -> sessions -> suite -> filter -> coverage -> score -> report."""
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if backend is None:
        backend = make_backend(config)
    if executor is None:
        executor = SandboxExecutor(
            config.project, shim_dir=config.shim_dir, timeout=config.snippet_timeout
        )

    sampled = generate_campaign_mutants(config)
    save_mutants(sampled, out / "mutants")

    ledger = ResultsLedger(out / "results.jsonl")
    transcripts = out / "transcripts"
    todo = [m for m in sampled if not ledger.has(m.id, config.approach)]
    aborted = 0
    aborted_lock = threading.Lock()

    def _one(mutant: Mutant) -> None:
        nonlocal aborted
        tpath = transcripts / f"{sanitize_id(mutant.id)}__{config.approach.value}.jsonl"
        try:
            result = run_mutant_session(
                mutant,
                config.approach,
                backend,
                executor,
                max_iterations=config.max_iterations,
                timeout=config.snippet_timeout,
                prices=config.prices,
                transcript_path=tpath,
            )
        except SessionAborted:
            with aborted_lock:
                aborted += 1
            return
        ledger.append(result)

    workers = config.effective_parallelism()
    if workers > 1 and len(todo) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(_one, todo))
    else:
        for mutant in todo:
            _one(mutant)

    sampled_ids = {m.id for m in sampled}
    results = [
        r
        for r in ledger.results()
        if r.approach is config.approach and r.mutant_id in sampled_ids
    ]

    suite = collect_suite(results)
    suite_dir = out / "tests"
    if suite_dir.exists():
        shutil.rmtree(suite_dir)
    suite_dir.mkdir(parents=True)
    for name, code in suite:
        (suite_dir / name).write_text(code, encoding="utf-8")

    stable, removed = executor.flakiness_filter(suite, runs=config.flaky_runs)
    if removed:
        (out / "removed_flaky.json").write_text(
            json.dumps([[name, run] for name, run in removed], indent=2) + "\n", "utf-8"
        )
    coverage = executor.measure_coverage(stable)
    evaluation = evaluate_suite(stable, sampled, executor)

    report = aggregate_report(
        results,
        coverage=coverage,
        evaluation=evaluation,
        project=config.project_name,
        max_iterations=config.max_iterations,
        aborted_sessions=aborted,
    )
    (out / "report.json").write_text(report.to_json(), "utf-8")
    (out / "report.txt").write_text(report.to_text(), "utf-8")
    return report
