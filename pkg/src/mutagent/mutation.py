"""Mutant generation for Python subject modules.

A lexical pass over the token stream finds spots where one of five small
syntactic replacements applies; each replacement yields one mutant carried
as mutated source plus a unified diff.  Tokenizing (rather than parsing)
is enough because every operator here only needs token identity, and it
guarantees string literals and comments are never touched.
"""

from __future__ import annotations

import io
import json
import keyword
import random
import re
import tokenize
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .errors import StalePoint, SubjectSyntaxError
from .textdiff import apply_unified_diff, render_diff


class OperatorKind(str, Enum):
    COMPARISON = "ComparisonReplacement"
    LOOP_CONTROL = "LoopControlSwap"
    NUMBER = "NumberReplacement"
    ARITHMETIC = "ArithmeticReplacement"
    BOOLEAN = "BooleanOperatorSwap"


ALL_KINDS = frozenset(OperatorKind)

# lexeme -> candidate replacements, kept finite on purpose
_COMPARISON = {"==": ("<=", "!="), "<": ("<=",), ">": (">=",), "<=": ("<",), ">=": (">",)}
_LOOP = {"continue": "break", "break": "continue"}
_BOOLEAN = {"and": "or", "or": "and"}
_ARITHMETIC = {"+": "-", "-": "+", "*": "/", "/": "*", "//": "/", "%": "//", "**": "*"}
_INT_LITERAL = re.compile(r"^\d+$")

# tokens that never matter for operand/operator context decisions
_INSIGNIFICANT = {
    tokenize.NL,
    tokenize.NEWLINE,
    tokenize.INDENT,
    tokenize.DEDENT,
    tokenize.COMMENT,
}


@dataclass(frozen=True)
class SubjectModule:
    """One Python source file of the subject project."""

    path: str  # project-relative posix path
    source: str  # newline-normalized text

    @property
    def line_count(self) -> int:
        if not self.source:
            return 0
        return self.source.count("\n") + (0 if self.source.endswith("\n") else 1)

    @classmethod
    def load(cls, project_root: Path, relpath: str) -> "SubjectModule":
        raw = (Path(project_root) / relpath).read_bytes()
        text = raw.decode("utf-8").replace("\r\n", "\n").replace("\r", "\n")
        return cls(path=Path(relpath).as_posix(), source=text)

    def store(self, project_root: Path) -> Path:
        target = Path(project_root) / self.path
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(self.source.encode("utf-8"))
        return target


@dataclass(frozen=True)
class MutationPoint:
    line: int  # 1-based
    token_span: tuple[int, int]  # absolute offsets into the source
    operator: OperatorKind
    original_lexeme: str
    replacement_lexeme: str


@dataclass(frozen=True)
class Mutant:
    id: str
    module: SubjectModule
    point: MutationPoint
    mutated_source: str
    diff: str


def _line_starts(source: str) -> list[int]:
    starts = [0]
    for i, ch in enumerate(source):
        if ch == "\n":
            starts.append(i + 1)
    return starts


def _is_operand(tok: tokenize.TokenInfo) -> bool:
    """Whether a token can end an expression (decides binary vs unary context)."""
    if tok.type in (tokenize.NUMBER, tokenize.STRING):
        return True
    if tok.type == tokenize.NAME:
        return not keyword.iskeyword(tok.string) or tok.string in ("True", "False", "None")
    return tok.type == tokenize.OP and tok.string in (")", "]", "}")


def scan_mutation_points(
    module: SubjectModule, kinds: frozenset[OperatorKind] | set[OperatorKind] = ALL_KINDS
) -> list[MutationPoint]:
    """Every point where one of *kinds* applies, in (line, offset) order.

    Arithmetic tokens are only matched in binary position (the previous
    significant token must be an operand), so `*args`, `**kwargs` and unary
    signs never produce unparseable mutants.
    """
    try:
        tokens = list(tokenize.generate_tokens(io.StringIO(module.source).readline))
    except (tokenize.TokenError, SyntaxError, ValueError) as exc:
        raise SubjectSyntaxError(f"{module.path}: {exc}") from exc

    starts = _line_starts(module.source)
    points: list[MutationPoint] = []
    prev: tokenize.TokenInfo | None = None

    def add(tok: tokenize.TokenInfo, kind: OperatorKind, replacement: str) -> None:
        srow, scol = tok.start
        erow, ecol = tok.end
        if srow != erow:  # only strings span lines, and those are never mutated
            return
        span = (starts[srow - 1] + scol, starts[srow - 1] + ecol)
        points.append(
            MutationPoint(
                line=srow,
                token_span=span,
                operator=kind,
                original_lexeme=tok.string,
                replacement_lexeme=replacement,
            )
        )

    for tok in tokens:
        if tok.type in _INSIGNIFICANT or tok.type == tokenize.ENDMARKER:
            continue
        if tok.type == tokenize.OP:
            if OperatorKind.COMPARISON in kinds and tok.string in _COMPARISON:
                for repl in _COMPARISON[tok.string]:
                    add(tok, OperatorKind.COMPARISON, repl)
            if (
                OperatorKind.ARITHMETIC in kinds
                and tok.string in _ARITHMETIC
                and prev is not None
                and _is_operand(prev)
            ):
                add(tok, OperatorKind.ARITHMETIC, _ARITHMETIC[tok.string])
        elif tok.type == tokenize.NAME:
            if OperatorKind.LOOP_CONTROL in kinds and tok.string in _LOOP:
                add(tok, OperatorKind.LOOP_CONTROL, _LOOP[tok.string])
            if OperatorKind.BOOLEAN in kinds and tok.string in _BOOLEAN:
                add(tok, OperatorKind.BOOLEAN, _BOOLEAN[tok.string])
        elif tok.type == tokenize.NUMBER and OperatorKind.NUMBER in kinds:
            if _INT_LITERAL.match(tok.string):
                n = int(tok.string)
                add(tok, OperatorKind.NUMBER, str(n + 1))
                if n > 0:
                    add(tok, OperatorKind.NUMBER, str(n - 1))
        prev = tok

    points.sort(key=lambda p: (p.line, p.token_span[0], p.operator.value, p.replacement_lexeme))
    return points


def _ordinal_of(module: SubjectModule, point: MutationPoint) -> int:
    """Index of *point* among scanned points sharing its (operator, line)."""
    group = [
        p
        for p in scan_mutation_points(module, {point.operator})
        if p.line == point.line
    ]
    try:
        return group.index(point)
    except ValueError:
        raise StalePoint(f"point {point} was not produced from {module.path}") from None


def mutant_id(module: SubjectModule, point: MutationPoint, ordinal: int) -> str:
    return f"{module.path}::{point.operator.value}::L{point.line}::{ordinal}"


def apply_mutation(module: SubjectModule, point: MutationPoint, ordinal: int | None = None) -> Mutant:
    """Apply one mutation point, producing the mutant source and its diff."""
    s, e = point.token_span
    if module.source[s:e] != point.original_lexeme:
        raise StalePoint(
            f"{module.path}:{point.line}: expected {point.original_lexeme!r}, "
            f"found {module.source[s:e]!r}"
        )
    mutated = module.source[:s] + point.replacement_lexeme + module.source[e:]
    if ordinal is None:
        ordinal = _ordinal_of(module, point)
    return Mutant(
        id=mutant_id(module, point, ordinal),
        module=module,
        point=point,
        mutated_source=mutated,
        diff=render_diff(module.source, mutated, path=module.path),
    )


def generate_mutants(
    module: SubjectModule, kinds: frozenset[OperatorKind] | set[OperatorKind] = ALL_KINDS
) -> list[Mutant]:
    """Scan and apply every point of *kinds*, with stable per-(operator, line) ordinals."""
    counters: dict[tuple[OperatorKind, int], int] = {}
    mutants = []
    for point in scan_mutation_points(module, kinds):
        key = (point.operator, point.line)
        ordinal = counters.get(key, 0)
        counters[key] = ordinal + 1
        mutants.append(apply_mutation(module, point, ordinal=ordinal))
    return mutants


def sample_mutants(all_mutants: list[Mutant], limit: int, seed: int) -> list[Mutant]:
    """Up to *limit* mutants, uniform without replacement, stable per seed.

    Output is sorted by id regardless of input order.
    """
    if limit < 0:
        raise ValueError("limit must be >= 0")
    pool = sorted(all_mutants, key=lambda m: m.id)
    if len(pool) <= limit:
        return pool
    picked = random.Random(seed).sample(pool, limit)
    return sorted(picked, key=lambda m: m.id)


def sanitize_id(mutant_id_text: str) -> str:
    """Filesystem-safe rendition of a mutant id (ids embed module paths)."""
    return re.sub(r"[^A-Za-z0-9._-]+", "_", mutant_id_text)


def discover_modules(project_root: Path) -> list[str]:
    """Project-relative paths of the Python modules worth mutating.

    Skips test files, hidden directories and caches.
    """
    root = Path(project_root)
    found = []
    for path in sorted(root.rglob("*.py")):
        rel = path.relative_to(root)
        parts = rel.parts
        if any(p.startswith(".") or p == "__pycache__" or p == "tests" for p in parts[:-1]):
            continue
        name = parts[-1]
        if name.startswith("test_") or name.endswith("_test.py") or name == "conftest.py":
            continue
        found.append(rel.as_posix())
    return found


def save_mutants(mutants: list[Mutant], out_dir: Path) -> Path:
    """Persist a mutant set: one ``<id>.diff`` per mutant plus ``mutants.jsonl``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    index = out / "mutants.jsonl"
    with index.open("w", encoding="utf-8") as fh:
        for m in mutants:
            (out / f"{sanitize_id(m.id)}.diff").write_text(m.diff, encoding="utf-8")
            record = {
                "id": m.id,
                "path": m.module.path,
                "line": m.point.line,
                "operator": m.point.operator.value,
                "original": m.point.original_lexeme,
                "replacement": m.point.replacement_lexeme,
            }
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    return index


def load_mutants(mutants_dir: Path, project_root: Path) -> list[Mutant]:
    """Rebuild the mutant set saved by :func:`save_mutants` against *project_root*."""
    index = Path(mutants_dir) / "mutants.jsonl"
    modules: dict[str, SubjectModule] = {}
    groups: dict[tuple[str, str, int], list[MutationPoint]] = {}
    mutants: list[Mutant] = []
    for raw in index.read_text(encoding="utf-8").splitlines():
        if not raw.strip():
            continue
        rec = json.loads(raw)
        module = modules.get(rec["path"])
        if module is None:
            module = SubjectModule.load(Path(project_root), rec["path"])
            modules[rec["path"]] = module
        kind = OperatorKind(rec["operator"])
        key = (rec["path"], rec["operator"], rec["line"])
        if key not in groups:
            groups[key] = [
                p for p in scan_mutation_points(module, {kind}) if p.line == rec["line"]
            ]
        ordinal = int(rec["id"].rsplit("::", 1)[1])
        point = groups[key][ordinal]
        if (point.original_lexeme, point.replacement_lexeme) != (rec["original"], rec["replacement"]):
            raise StalePoint(f"{rec['id']}: stored point no longer matches a rescan")
        mutant = apply_mutation(module, point, ordinal=ordinal)
        stored_diff = (Path(mutants_dir) / f"{sanitize_id(rec['id'])}.diff").read_text("utf-8")
        if apply_unified_diff(module.source, stored_diff) != mutant.mutated_source:
            raise StalePoint(f"{rec['id']}: stored diff no longer reproduces the mutant")
        mutants.append(mutant)
    return mutants
