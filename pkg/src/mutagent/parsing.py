"""Lenient parsing of model replies into sections and code blocks.

Model output rarely follows the requested structure exactly, so everything
here is permissive: headlines match at any markdown level and casing, fences
match with or without a language tag, and an unterminated fence runs to the
end of the message.  ``parse_response`` is total - it never raises, whatever
bytes it is fed.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum


class SectionKind(Enum):
    HYPOTHESIS = "hypothesis"
    EXPERIMENT = "experiment"
    CONCLUSION = "conclusion"
    TEST = "test"
    EQUIVALENT_MUTANT = "equivalent_mutant"
    UNKNOWN = "unknown"


_HEADLINE_RE = re.compile(r"^ {0,3}(#{1,6})\s*(.+?)\s*#*\s*$")
_FENCE_RE = re.compile(r"^\s*(```+|~~~+)\s*([A-Za-z0-9_+-]*)\s*$")

# headline text -> kind; matching ignores case, surrounding punctuation and
# an optional plural s / trailing qualifier ("Test Case", "Experiment 2")
_KIND_WORDS = {
    "hypothesis": SectionKind.HYPOTHESIS,
    "hypotheses": SectionKind.HYPOTHESIS,
    "experiment": SectionKind.EXPERIMENT,
    "experiments": SectionKind.EXPERIMENT,
    "conclusion": SectionKind.CONCLUSION,
    "conclusions": SectionKind.CONCLUSION,
    "test": SectionKind.TEST,
    "tests": SectionKind.TEST,
    "equivalent mutant": SectionKind.EQUIVALENT_MUTANT,
    "equivalent mutants": SectionKind.EQUIVALENT_MUTANT,
}


def _classify_headline(text: str) -> SectionKind:
    cleaned = re.sub(r"[^a-z ]+", " ", text.lower())
    cleaned = re.sub(r"\s+", " ", cleaned).strip()
    if cleaned in _KIND_WORDS:
        return _KIND_WORDS[cleaned]
    # "Test Case", "Final Test", "Experiment 2" and the like
    for phrase, kind in _KIND_WORDS.items():
        if cleaned == phrase or cleaned.startswith(phrase + " ") or cleaned.endswith(" " + phrase):
            return kind
    return SectionKind.UNKNOWN


@dataclass(frozen=True)
class CodeBlock:
    code: str
    language: str  # "" when the fence had no tag
    section: SectionKind  # section the block sits in
    complete: bool  # False when the closing fence was missing


@dataclass
class ParsedMessage:
    sections: list[tuple[SectionKind, str]] = field(default_factory=list)
    code_blocks: list[CodeBlock] = field(default_factory=list)
    chosen_code: CodeBlock | None = None
    claims_equivalent: bool = False

    def section_bodies(self, kind: SectionKind) -> list[str]:
        return [body for k, body in self.sections if k is kind]


def _choose_code(blocks: list[CodeBlock]) -> CodeBlock | None:
    """Pick the block most likely meant for execution.

    Preference order: blocks inside a Test section, then inside an
    Experiment section, then anything; within a tier, complete blocks beat
    unterminated ones and the last such block wins.
    """
    if not blocks:
        return None
    for tier in (SectionKind.TEST, SectionKind.EXPERIMENT, None):
        candidates = blocks if tier is None else [b for b in blocks if b.section is tier]
        if not candidates:
            continue
        complete = [b for b in candidates if b.complete]
        return (complete or candidates)[-1]
    return None


def parse_response(text: str) -> ParsedMessage:
    """Split an assistant message into sections and fenced code blocks."""
    if not isinstance(text, str):
        text = str(text)

    sections: list[tuple[SectionKind, str]] = []
    blocks: list[CodeBlock] = []

    current_kind: SectionKind | None = None
    current_body: list[str] = []
    fence: str | None = None
    fence_lang = ""
    fence_lines: list[str] = []
    fence_section: SectionKind = SectionKind.UNKNOWN

    def close_section() -> None:
        nonlocal current_body
        if current_kind is not None:
            sections.append((current_kind, "\n".join(current_body).strip()))
        current_body = []

    def close_fence(complete: bool) -> None:
        nonlocal fence
        blocks.append(
            CodeBlock(
                code="\n".join(fence_lines),
                language=fence_lang,
                section=fence_section,
                complete=complete,
            )
        )
        fence = None
        fence_lines.clear()

    for line in text.splitlines():
        if fence is not None:
            if _FENCE_RE.match(line) and line.strip().startswith(fence[0]):
                close_fence(complete=True)
            else:
                fence_lines.append(line)
            continue
        fence_match = _FENCE_RE.match(line)
        if fence_match:
            fence = fence_match.group(1)
            fence_lang = fence_match.group(2).lower()
            fence_section = current_kind if current_kind is not None else SectionKind.UNKNOWN
            continue
        headline = _HEADLINE_RE.match(line)
        if headline:
            close_section()
            current_kind = _classify_headline(headline.group(2))
            continue
        current_body.append(line)
    if fence is not None:
        close_fence(complete=False)
    close_section()

    claims = any(kind is SectionKind.EQUIVALENT_MUTANT for kind, _ in sections)
    return ParsedMessage(
        sections=sections,
        code_blocks=blocks,
        chosen_code=_choose_code(blocks),
        claims_equivalent=claims,
    )
