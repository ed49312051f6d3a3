"""Sandboxed snippet execution against fresh workspace copies of the PUT.

Every execution gets its own throwaway workspace and its own interpreter
process (spawned through the runner shim), is killed as a whole process
group at the timeout, and has its output captured with lossy decoding so
hostile bytes can never crash the harness.  The original subject tree is
never touched.
"""

from __future__ import annotations

import hashlib
import json
import os
import shutil
import signal
import subprocess
import sys
import tempfile
import time
import uuid
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .errors import CoverageToolError, PatchFailure, SpawnError
from .mutation import Mutant
from .textdiff import apply_unified_diff

DEFAULT_TIMEOUT = 5.0
TIMEOUT_SLACK = 1.0  # seconds allowed for process-group kill latency

# variables copied into the snippet environment when present
_ENV_ALLOWLIST = ("PATH", "HOME", "LANG", "LC_ALL", "TMPDIR", "TEMP", "TMP", "SYSTEMROOT")


class Discrepancy(Enum):
    NONE = "none"
    OUTPUT_DIFF = "output_diff"
    EXCEPTION_DIFF = "exception_diff"
    TIMEOUT_DIFF = "timeout_diff"


@dataclass(frozen=True)
class ExecutionResult:
    stdout: str  # snippet stdout, lossy-decoded
    stderr: str  # lossy-decoded
    exit_status: int  # negative values are the killing signal
    timed_out: bool
    duration: float
    timeout: float  # the limit that was in force
    stdout_bytes: int = 0  # raw sizes before decoding
    stderr_bytes: int = 0


@dataclass(frozen=True)
class VerdictPair:
    baseline: ExecutionResult
    mutant: ExecutionResult
    discrepancy: Discrepancy


@dataclass(frozen=True)
class FileCoverage:
    lines_covered: int
    lines_total: int
    branches_covered: int
    branches_total: int


@dataclass(frozen=True)
class CoverageReport:
    line_percent: float
    branch_percent: float
    per_file: dict[str, FileCoverage] = field(default_factory=dict)


def passed(result: ExecutionResult) -> bool:
    """The pass convention: exit status 0 and no timeout."""
    return result.exit_status == 0 and not result.timed_out


def is_kill(pair: VerdictPair) -> bool:
    """A test kills the mutant when it passes on the baseline and fails on the mutant."""
    return passed(pair.baseline) and not passed(pair.mutant)


def _stdout_lines(text: str) -> list[str]:
    return [line.rstrip() for line in text.splitlines()]


def classify_discrepancy(baseline: ExecutionResult, mutant: ExecutionResult) -> Discrepancy:
    if baseline.timed_out != mutant.timed_out:
        return Discrepancy.TIMEOUT_DIFF
    if passed(baseline) != passed(mutant):
        return Discrepancy.EXCEPTION_DIFF
    if _stdout_lines(baseline.stdout) != _stdout_lines(mutant.stdout):
        return Discrepancy.OUTPUT_DIFF
    return Discrepancy.NONE


def find_shim_dir() -> Path:
    """Locate the runner-shim scripts: env override, then the repo checkout."""
    env = os.environ.get("MUTAGENT_SHIM_DIR")
    if env:
        path = Path(env)
        if (path / "shim_run.py").is_file():
            return path
        raise SpawnError(f"MUTAGENT_SHIM_DIR={env} does not contain shim_run.py")
    candidate = Path(__file__).resolve().parents[2] / "shim"
    if (candidate / "shim_run.py").is_file():
        return candidate
    raise SpawnError(
        "runner shim not found; set MUTAGENT_SHIM_DIR to the directory holding shim_run.py"
    )


def sandbox_env() -> dict[str, str]:
    env = {key: os.environ[key] for key in _ENV_ALLOWLIST if key in os.environ}
    env["PYTHONHASHSEED"] = "0"
    env["PYTHONDONTWRITEBYTECODE"] = "1"
    env["PYTHONIOENCODING"] = "utf-8"
    return env


def tree_checksum(root: Path) -> str:
    """Stable digest of every file under *root* (caches excluded)."""
    digest = hashlib.sha256()
    root = Path(root)
    for path in sorted(root.rglob("*")):
        rel = path.relative_to(root)
        if any(part == "__pycache__" or part.startswith(".") for part in rel.parts):
            continue
        if path.is_file() and not path.name.endswith(".pyc"):
            digest.update(rel.as_posix().encode())
            digest.update(b"\0")
            digest.update(path.read_bytes())
            digest.update(b"\0")
    return digest.hexdigest()


def _extract_sentinel_stdout(text: str, nonce: str) -> str:
    begin = f"##SHIM-BEGIN:{nonce}##"
    end = f"##SHIM-END:{nonce}##"
    i = text.find(begin)
    if i < 0:
        return text
    start = i + len(begin)
    j = text.rfind(end)
    segment = text[start:j] if j >= start else text[start:]
    return segment[1:] if segment.startswith("\n") else segment


class SandboxExecutor:
    """Executes snippets against one subject project."""

    def __init__(
        self,
        project_root: Path,
        shim_dir: Path | None = None,
        interpreter: str | None = None,
        timeout: float = DEFAULT_TIMEOUT,
        work_base: Path | None = None,
    ):
        self.project_root = Path(project_root)
        if not self.project_root.is_dir():
            raise SpawnError(f"subject tree not readable: {project_root}")
        self.shim_dir = Path(shim_dir) if shim_dir else find_shim_dir()
        if not (self.shim_dir / "shim_run.py").is_file():
            raise SpawnError(f"{self.shim_dir} does not contain shim_run.py")
        self.interpreter = interpreter or sys.executable
        self.timeout = timeout
        self.work_base = str(work_base) if work_base else None

    # -- workspaces ---------------------------------------------------------

    def prepare_workspace(self, mutant: Mutant | None = None) -> Path:
        """A fresh throwaway copy of the subject tree, optionally mutated."""
        workspace = Path(tempfile.mkdtemp(prefix="mutagent-ws-", dir=self.work_base))
        shutil.copytree(
            self.project_root,
            workspace,
            dirs_exist_ok=True,
            ignore=shutil.ignore_patterns("__pycache__", "*.pyc"),
        )
        if mutant is not None:
            target = workspace / mutant.module.path
            try:
                current = target.read_text("utf-8")
            except OSError as exc:
                raise PatchFailure(f"{mutant.id}: target file missing: {exc}") from exc
            patched = apply_unified_diff(current, mutant.diff)
            target.write_text(patched, encoding="utf-8")
        return workspace

    # -- execution ----------------------------------------------------------

    def execute_snippet(
        self, workspace: Path, code: str, timeout: float | None = None
    ) -> ExecutionResult:
        """Run one snippet inside *workspace* through the shim."""
        limit = self.timeout if timeout is None else timeout
        workspace = Path(workspace)
        # fixed name: workspaces are never shared, and a stable path keeps
        # tracebacks (and therefore replayed conversations) deterministic
        snippet = workspace / "_snippet.py"
        snippet.write_text(code, encoding="utf-8")
        nonce = uuid.uuid4().hex[:12]
        cmd = [
            self.interpreter,
            str(self.shim_dir / "shim_run.py"),
            str(snippet),
            str(workspace),
            "--nonce",
            nonce,
        ]
        start = time.monotonic()
        try:
            proc = subprocess.Popen(
                cmd,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                cwd=workspace,
                env=sandbox_env(),
                start_new_session=True,
            )
        except OSError as exc:
            raise SpawnError(f"cannot start interpreter {self.interpreter}: {exc}") from exc
        timed_out = False
        try:
            out, err = proc.communicate(timeout=limit)
        except subprocess.TimeoutExpired:
            timed_out = True
            try:
                os.killpg(os.getpgid(proc.pid), signal.SIGKILL)
            except (ProcessLookupError, PermissionError):
                proc.kill()
            out, err = proc.communicate()
        duration = time.monotonic() - start
        # the throwaway workspace path is run-unique noise; scrub it so
        # captured output (tracebacks especially) is stable across runs
        placeholder = "<workspace>"
        stdout_text = out.decode("utf-8", errors="replace").replace(str(workspace), placeholder)
        stderr_text = err.decode("utf-8", errors="replace").replace(str(workspace), placeholder)
        return ExecutionResult(
            stdout=_extract_sentinel_stdout(stdout_text, nonce),
            stderr=stderr_text,
            exit_status=proc.returncode,
            timed_out=timed_out,
            duration=duration,
            timeout=limit,
            stdout_bytes=len(out),
            stderr_bytes=len(err),
        )

    def run_in_fresh_workspace(
        self, code: str, mutant: Mutant | None = None, timeout: float | None = None
    ) -> ExecutionResult:
        workspace = self.prepare_workspace(mutant)
        try:
            return self.execute_snippet(workspace, code, timeout)
        finally:
            shutil.rmtree(workspace, ignore_errors=True)

    def run_pair(
        self, mutant: Mutant, code: str, timeout: float | None = None
    ) -> VerdictPair:
        """Execute *code* on a fresh baseline and a fresh mutant workspace."""
        baseline = self.run_in_fresh_workspace(code, mutant=None, timeout=timeout)
        mutated = self.run_in_fresh_workspace(code, mutant=mutant, timeout=timeout)
        return VerdictPair(
            baseline=baseline,
            mutant=mutated,
            discrepancy=classify_discrepancy(baseline, mutated),
        )

    def is_killing_test(
        self, mutant: Mutant, test_code: str, timeout: float | None = None
    ) -> tuple[bool, VerdictPair]:
        pair = self.run_pair(mutant, test_code, timeout)
        return is_kill(pair), pair

    # -- suite-level operations ---------------------------------------------

    def flakiness_filter(
        self, suite: list[tuple[str, str]], runs: int = 100, timeout: float | None = None
    ) -> tuple[list[tuple[str, str]], list[tuple[str, int]]]:
        """Keep tests that pass *runs* consecutive executions on the clean PUT.

        Returns (stable suite, removed) where each removed entry carries the
        index of the first failing run.
        """
        if runs < 1:
            raise ValueError("runs must be >= 1")
        stable: list[tuple[str, str]] = []
        removed: list[tuple[str, int]] = []
        for name, code in suite:
            failing_run: int | None = None
            for i in range(runs):
                result = self.run_in_fresh_workspace(code, timeout=timeout)
                if not passed(result):
                    failing_run = i
                    break
            if failing_run is None:
                stable.append((name, code))
            else:
                removed.append((name, failing_run))
        return stable, removed

    def measure_coverage(
        self, suite: list[tuple[str, str]], timeout: float | None = None
    ) -> CoverageReport:
        """Run the (stable) suite once under the coverage shim and parse its report."""
        shim = self.shim_dir / "shim_coverage.py"
        if not shim.is_file():
            raise CoverageToolError(f"{shim} not found")
        workspace = self.prepare_workspace()
        suite_dir = workspace / "_suite"
        suite_dir.mkdir()
        for name, code in suite:
            (suite_dir / name).write_text(code, encoding="utf-8")
        report_path = Path(tempfile.mkdtemp(prefix="mutagent-cov-", dir=self.work_base)) / "coverage.json"
        limit = timeout if timeout is not None else max(60.0, 2 * self.timeout * max(1, len(suite)))
        try:
            proc = subprocess.run(
                [
                    self.interpreter,
                    str(shim),
                    str(suite_dir),
                    str(workspace),
                    "--report",
                    str(report_path),
                ],
                capture_output=True,
                cwd=workspace,
                env=sandbox_env(),
                timeout=limit,
            )
        except subprocess.TimeoutExpired as exc:
            raise CoverageToolError(f"coverage run exceeded {limit:g}s") from exc
        except OSError as exc:
            raise SpawnError(f"cannot start interpreter {self.interpreter}: {exc}") from exc
        finally:
            shutil.rmtree(workspace, ignore_errors=True)
        if proc.returncode == 2:
            raise CoverageToolError(proc.stderr.decode("utf-8", errors="replace"))
        try:
            document = json.loads(report_path.read_text("utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise CoverageToolError(f"unparseable coverage report: {exc}") from exc
        finally:
            shutil.rmtree(report_path.parent, ignore_errors=True)
        return parse_coverage_document(document)


def parse_coverage_document(document: dict) -> CoverageReport:
    """Fold the shim's JSON report into a CoverageReport."""
    try:
        per_file = {
            path: FileCoverage(
                lines_covered=entry["summary"]["covered_lines"],
                lines_total=entry["summary"]["num_statements"],
                branches_covered=entry["summary"]["covered_branches"],
                branches_total=entry["summary"]["num_branches"],
            )
            for path, entry in sorted(document["files"].items())
        }
        totals = document["totals"]
        lines_total = totals["num_statements"]
        branches_total = totals["num_branches"]
    except (KeyError, TypeError) as exc:
        raise CoverageToolError(f"coverage report missing field: {exc}") from exc
    line_percent = 100.0 if lines_total == 0 else 100.0 * totals["covered_lines"] / lines_total
    branch_percent = (
        100.0 if branches_total == 0 else 100.0 * totals["covered_branches"] / branches_total
    )
    return CoverageReport(
        line_percent=line_percent, branch_percent=branch_percent, per_file=per_file
    )
