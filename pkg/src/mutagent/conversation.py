"""The prompting state machine: one conversation per (mutant, approach).

Prompt text lives in plain-text template assets under ``prompts/``;
placeholders are substituted literally so braces inside code examples
survive.  Everything here is deterministic: identical inputs produce
byte-identical prompts, and all wall-clock data stays out of turn text.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources

from .errors import IllegalPhase
from .mutation import Mutant, SubjectModule
from .parsing import ParsedMessage, SectionKind
from .sandbox import VerdictPair, is_kill, passed

DEFAULT_MAX_ITERATIONS = 10
DEFAULT_TIMEOUT = 5.0

# source embedding limits: files longer than HEAD + WINDOW lines are cut to
# the first HEAD lines plus WINDOW lines around the mutation
TRUNCATE_HEAD = 100
TRUNCATE_WINDOW = 900


class Approach(str, Enum):
    BASELINE = "baseline"
    ITERATIVE = "iterative"
    SCIENTIFIC_0SHOT = "scientific-0shot"
    SCIENTIFIC_1SHOT = "scientific-1shot"

    @property
    def is_scientific(self) -> bool:
        return self in (Approach.SCIENTIFIC_0SHOT, Approach.SCIENTIFIC_1SHOT)

    @property
    def single_shot(self) -> bool:
        return self is Approach.BASELINE


class SessionOutcome(str, Enum):
    SUCCESS = "success"
    FAILED = "failed"
    CLAIMED_EQUIVALENT = "claimed_equivalent"
    CLAIMED_EQUIVALENT_AND_KILLED = "claimed_equivalent_and_killed"


def outcome_from(claimed: bool, killed: bool) -> SessionOutcome:
    if claimed and killed:
        return SessionOutcome.CLAIMED_EQUIVALENT_AND_KILLED
    if claimed:
        return SessionOutcome.CLAIMED_EQUIVALENT
    if killed:
        return SessionOutcome.SUCCESS
    return SessionOutcome.FAILED


class Phase(Enum):
    AWAITING_MODEL = "awaiting_model"
    AWAITING_EXECUTION = "awaiting_execution"
    FINISHED = "finished"


# ---------------------------------------------------------------------------
# Actions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RunExperiment:
    code: str


@dataclass(frozen=True)
class RunTest:
    code: str


@dataclass(frozen=True)
class RepromptInvalid:
    reason: str


@dataclass(frozen=True)
class RepromptCompileError:
    diagnostic: str


@dataclass(frozen=True)
class ContinueAfterClaim:
    """Acknowledge an equivalence claim and instruct the model to keep going."""


@dataclass(frozen=True)
class Finish:
    outcome: SessionOutcome


Action = RunExperiment | RunTest | RepromptInvalid | RepromptCompileError | ContinueAfterClaim | Finish

# consecutive non-executing model turns tolerated before an iteration is
# written off as consumed
REPROMPT_BUDGET = 2


@dataclass
class Turn:
    role: str  # system | user | assistant
    text: str
    iteration: int
    timestamp: float


@dataclass
class ConversationState:
    approach: Approach
    max_iterations: int = DEFAULT_MAX_ITERATIONS
    turns: list[Turn] = field(default_factory=list)
    iteration: int = 0
    phase: Phase = Phase.AWAITING_MODEL
    claimed_equivalent_at: int | None = None
    outcome: SessionOutcome | None = None
    pending: RunExperiment | RunTest | None = None
    reprompt_streak: int = 0

    def add_turn(self, role: str, text: str) -> Turn:
        turn = Turn(role=role, text=text, iteration=self.iteration, timestamp=time.time())
        self.turns.append(turn)
        return turn

    def messages(self) -> list[dict[str, str]]:
        """Turns in chat-completion wire shape."""
        return [{"role": t.role, "content": t.text} for t in self.turns]

    def finish(self, outcome: SessionOutcome) -> None:
        self.outcome = outcome
        self.phase = Phase.FINISHED
        self.pending = None

    @property
    def claimed(self) -> bool:
        return self.claimed_equivalent_at is not None


# ---------------------------------------------------------------------------
# Templates and prompt assembly
# ---------------------------------------------------------------------------

def _template(name: str) -> str:
    return resources.files("mutagent.prompts").joinpath(f"{name}.txt").read_text("utf-8")


def _fill(template: str, **values: str) -> str:
    # literal replacement, not str.format: templates and values contain braces
    for key, value in values.items():
        template = template.replace("{" + key + "}", value)
    return template


def render_put_source(
    module: SubjectModule,
    mutation_line: int,
    head: int = TRUNCATE_HEAD,
    window: int = TRUNCATE_WINDOW,
) -> str:
    """The module source with line numbers, truncated when very long.

    Long modules are cut to the first *head* lines plus a *window*-line block
    centered on the mutation, with elision markers in between; original line
    numbers are preserved either way.
    """
    lines = module.source.splitlines()
    total = len(lines)

    def numbered(first: int, last: int) -> list[str]:
        return [f"{i:4d}  {lines[i - 1]}" for i in range(first, last + 1)]

    if total <= head + window:
        return "\n".join(numbered(1, total))

    start = mutation_line - window // 2
    start = max(head + 1, min(start, total - window + 1))
    end = start + window - 1
    out = numbered(1, head)
    if start > head + 1:
        out.append(f"      ... lines {head + 1}-{start - 1} omitted ...")
    out.extend(numbered(start, end))
    if end < total:
        out.append(f"      ... lines {end + 1}-{total} omitted ...")
    return "\n".join(out)


_SYSTEM_TEMPLATES = {
    Approach.BASELINE: "system_baseline",
    Approach.ITERATIVE: "system_iterative",
    Approach.SCIENTIFIC_0SHOT: "system_scientific",
    Approach.SCIENTIFIC_1SHOT: "system_scientific",
}


def build_initial_prompt(
    approach: Approach,
    put: SubjectModule,
    mutant: Mutant,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
    timeout: float = DEFAULT_TIMEOUT,
) -> list[tuple[str, str]]:
    """System and user turns opening a session, as (role, text) pairs.

    Pure function of its inputs: byte-identical output for identical input.
    """
    if put.path != mutant.module.path:
        raise ValueError(f"mutant targets {mutant.module.path}, not {put.path}")
    example = _template("example_loop") if approach is Approach.SCIENTIFIC_1SHOT else ""
    system = _fill(
        _template(_SYSTEM_TEMPLATES[approach]),
        example_loop=example,
        max_iterations=str(max_iterations),
        timeout=f"{timeout:g}",
    )
    user = _fill(
        _template("task"),
        put_source=render_put_source(put, mutant.point.line),
        mutant_diff=mutant.diff.rstrip("\n"),
    )
    return [("system", system.rstrip("\n") + "\n"), ("user", user.rstrip("\n") + "\n")]


def new_session(
    approach: Approach,
    put: SubjectModule,
    mutant: Mutant,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
    timeout: float = DEFAULT_TIMEOUT,
) -> ConversationState:
    state = ConversationState(approach=approach, max_iterations=max_iterations)
    for role, text in build_initial_prompt(approach, put, mutant, max_iterations, timeout):
        state.add_turn(role, text)
    return state


# ---------------------------------------------------------------------------
# Policy
# ---------------------------------------------------------------------------

def compile_diagnostic(code: str) -> str | None:
    """Syntax-check a snippet; None when it compiles, else the error text."""
    try:
        compile(code, "<snippet>", "exec")
    except SyntaxError as exc:
        return f"{exc.__class__.__name__}: {exc.msg} (line {exc.lineno})"
    except (ValueError, TypeError) as exc:  # e.g. null bytes in source
        return f"{exc.__class__.__name__}: {exc}"
    return None


def next_action(
    state: ConversationState,
    msg: ParsedMessage | None = None,
    verdict: VerdictPair | None = None,
) -> Action | None:
    """Decide what to do after a model reply (*msg*) or an execution (*verdict*).

    Called with *verdict*, returns either a Finish or None, where None means
    "relay execution feedback and keep looping".  Called with *msg*, returns
    the action the reply warrants; reprompt bookkeeping (two consecutive
    non-executing turns, then the iteration counts as consumed) happens here.
    """
    if state.phase is Phase.FINISHED:
        raise IllegalPhase("next_action called on a finished session")

    if verdict is not None:
        was_test = isinstance(state.pending, RunTest)
        killed = was_test and is_kill(verdict)
        if killed:
            return Finish(outcome_from(state.claimed, True))
        if state.approach.single_shot:
            return Finish(outcome_from(state.claimed, False))
        if state.iteration >= state.max_iterations:
            return Finish(outcome_from(state.claimed, False))
        return None

    if msg is None:
        raise ValueError("next_action needs a parsed message or a verdict")

    if msg.claims_equivalent and state.claimed_equivalent_at is None:
        # claims are recorded against the iteration being worked on (1-based)
        state.claimed_equivalent_at = state.iteration + 1

    code = msg.chosen_code
    if code is None:
        if state.approach.single_shot:
            return Finish(outcome_from(state.claimed, False))
        if msg.claims_equivalent:
            return _bounded(state, ContinueAfterClaim())
        return _bounded(state, RepromptInvalid("it contained no runnable code"))

    diagnostic = compile_diagnostic(code.code)
    if diagnostic is not None:
        if state.approach.single_shot:
            return Finish(outcome_from(state.claimed, False))
        return _bounded(state, RepromptCompileError(diagnostic))

    if code.section is SectionKind.TEST:
        return _run(state, RunTest(code.code))
    if code.section is SectionKind.EXPERIMENT:
        return _run(state, RunExperiment(code.code))
    if not state.approach.is_scientific:
        # baseline and iterative replies are tests by construction
        return _run(state, RunTest(code.code))
    if msg.claims_equivalent:
        return _bounded(state, ContinueAfterClaim())
    return _bounded(state, RepromptInvalid("the code block was not under an Experiment or Test headline"))


def _run(state: ConversationState, action: RunExperiment | RunTest) -> Action:
    state.pending = action
    state.phase = Phase.AWAITING_EXECUTION
    state.reprompt_streak = 0
    return action


def _bounded(state: ConversationState, action: Action) -> Action:
    """Apply the consecutive-reprompt budget before handing back a reprompt."""
    state.reprompt_streak += 1
    if state.reprompt_streak > REPROMPT_BUDGET:
        state.reprompt_streak = 0
        state.iteration += 1
        if state.iteration >= state.max_iterations:
            return Finish(outcome_from(state.claimed, False))
    return action


def record_execution(state: ConversationState, verdict: VerdictPair) -> None:
    """Book one executed snippet: the turn that produced it consumed an iteration."""
    if state.pending is None:
        raise IllegalPhase("record_execution without a pending snippet")
    state.iteration += 1
    state.phase = Phase.AWAITING_MODEL
    state.reprompt_streak = 0


# ---------------------------------------------------------------------------
# Feedback rendering
# ---------------------------------------------------------------------------

def _status_line(label: str, result) -> str:
    if result.timed_out:
        return f"The {label} run hit the {result.timeout:g}-second timeout and was aborted."
    verdict = "passed (exit status 0)" if passed(result) else f"failed (exit status {result.exit_status})"
    text = f"The {label} run {verdict}."
    if result.stderr.strip():
        text += f"\n\nstderr:\n```\n{result.stderr.rstrip()}\n```"
    return text


def render_execution_feedback(verdict: VerdictPair) -> str:
    """Both runs' captured output, statuses, and timeout flags, labeled."""
    return _fill(
        _template("feedback"),
        baseline_output=verdict.baseline.stdout.rstrip("\n"),
        baseline_status=_status_line("Baseline", verdict.baseline),
        mutant_output=verdict.mutant.stdout.rstrip("\n"),
        mutant_status=_status_line("Mutant", verdict.mutant),
    ).rstrip("\n") + "\n"


def render_reprompt(action: RepromptInvalid | RepromptCompileError | ContinueAfterClaim) -> str:
    if isinstance(action, RepromptInvalid):
        return _fill(_template("reprompt_invalid"), reason=action.reason)
    if isinstance(action, RepromptCompileError):
        return _fill(_template("reprompt_compile_error"), diagnostic=action.diagnostic)
    return _template("continue_after_claim")


def render_followup(was_test: bool) -> str:
    return _template("after_failed_test" if was_test else "after_experiment")
