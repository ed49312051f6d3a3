"""Unified diff rendering and strict patch application.

Diffs are rendered with ``a/<path>`` / ``b/<path>`` labels and no timestamp
header so they are byte-stable across runs and digestible by ``patch -p1``.
Application is strict: every context and removal line must match the target
text exactly, otherwise :class:`~mutagent.errors.PatchFailure` is raised.
"""

from __future__ import annotations

import difflib
import re

from .errors import PatchFailure

_HUNK_RE = re.compile(r"^@@ -(\d+)(?:,(\d+))? \+(\d+)(?:,(\d+))? @@")
_NO_NEWLINE = "\\ No newline at end of file"


def render_diff(original: str, mutated: str, path: str = "module.py", context: int = 3) -> str:
    """Render a unified diff that turns *original* into *mutated*.

    Returns the empty string when the texts are identical.  Lines lacking a
    trailing newline are followed by the conventional ``\\ No newline at end
    of file`` marker, as GNU diff emits.
    """
    if original == mutated:
        return ""
    a = original.splitlines(keepends=True)
    b = mutated.splitlines(keepends=True)
    out: list[str] = []
    for line in difflib.unified_diff(a, b, fromfile=f"a/{path}", tofile=f"b/{path}", n=context):
        if line.endswith("\n"):
            out.append(line)
        else:
            out.append(line + "\n")
            out.append(_NO_NEWLINE + "\n")
    return "".join(out)


def _parse_hunks(diff: str, reverse: bool) -> list[tuple[int, list[str], list[str]]]:
    """Return (old_start, old_lines, new_lines) per hunk, already reversed if asked."""
    hunks: list[tuple[int, list[str], list[str]]] = []
    old_lines: list[str] = []
    new_lines: list[str] = []
    old_start = 0
    in_hunk = False
    last_added: list[list[str]] = []  # which side(s) the previous body line went to

    def flush() -> None:
        if in_hunk:
            hunks.append((old_start, old_lines.copy(), new_lines.copy()))

    for raw in diff.splitlines(keepends=True):
        if raw.startswith("--- ") or raw.startswith("+++ "):
            continue
        m = _HUNK_RE.match(raw)
        if m:
            flush()
            in_hunk = True
            old_lines.clear()
            new_lines.clear()
            start_minus, start_plus = int(m.group(1)), int(m.group(3))
            old_start = start_plus if reverse else start_minus
            last_added = []
            continue
        if not in_hunk:
            continue
        if raw.startswith(_NO_NEWLINE):
            for side in last_added:
                side[-1] = side[-1].rstrip("\n")
            continue
        body = raw[1:]
        tag = raw[:1]
        if reverse:
            tag = {"-": "+", "+": "-"}.get(tag, tag)
        if tag == " ":
            old_lines.append(body)
            new_lines.append(body)
            last_added = [old_lines, new_lines]
        elif tag == "-":
            old_lines.append(body)
            last_added = [old_lines]
        elif tag == "+":
            new_lines.append(body)
            last_added = [new_lines]
        elif raw.strip() == "":
            # tolerate a trailing blank line some tools append
            continue
        else:
            raise PatchFailure(f"unrecognized diff line: {raw!r}")
    flush()
    return hunks


def apply_unified_diff(original: str, diff: str, reverse: bool = False) -> str:
    """Apply *diff* to *original* and return the patched text.

    With ``reverse=True`` the diff is applied backwards, recovering the
    pre-image from the post-image.  Raises PatchFailure when any context or
    removal line disagrees with *original*.
    """
    if not diff.strip():
        return original
    src = original.splitlines(keepends=True)
    out: list[str] = []
    cursor = 0  # index into src of the next uncopied line
    for old_start, old_lines, new_lines in _parse_hunks(diff, reverse):
        # old_start is 1-based; a zero-length old side still anchors after start
        anchor = old_start - 1 if old_lines else old_start
        if anchor < cursor or anchor > len(src):
            raise PatchFailure(f"hunk at line {old_start} overlaps or exceeds the text")
        out.extend(src[cursor:anchor])
        cursor = anchor
        window = src[cursor:cursor + len(old_lines)]
        if window != old_lines:
            raise PatchFailure(
                f"hunk at line {old_start} does not match the target text "
                f"(expected {old_lines!r}, found {window!r})"
            )
        out.extend(new_lines)
        cursor += len(old_lines)
    out.extend(src[cursor:])
    return "".join(out)


def revert_diff(mutated: str, diff: str) -> str:
    """Undo *diff* on the patched text, restoring the original byte-exactly."""
    return apply_unified_diff(mutated, diff, reverse=True)
