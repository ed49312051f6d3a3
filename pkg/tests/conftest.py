"""Shared fixtures: demo project copies, executors, and generated mutants."""

from __future__ import annotations

import shutil
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # for the backends helper module

from mutagent.fixtures import demo_project_path
from mutagent.mutation import SubjectModule, generate_mutants
from mutagent.sandbox import SandboxExecutor

REPO_ROOT = Path(__file__).resolve().parents[1]
SHIM_DIR = REPO_ROOT / "shim"


@pytest.fixture(scope="session")
def demo_project(tmp_path_factory) -> Path:
    """A writable copy of the bundled demo project."""
    target = tmp_path_factory.mktemp("demo-project")
    shutil.copytree(demo_project_path(), target, dirs_exist_ok=True)
    return target


@pytest.fixture(scope="session")
def demo_module(demo_project) -> SubjectModule:
    return SubjectModule.load(demo_project, "tinyutils.py")


@pytest.fixture(scope="session")
def demo_mutants(demo_module):
    return generate_mutants(demo_module)


@pytest.fixture(scope="session")
def demo_mutants_by_id(demo_mutants):
    return {m.id: m for m in demo_mutants}


@pytest.fixture(scope="session")
def executor(demo_project, tmp_path_factory) -> SandboxExecutor:
    work_base = tmp_path_factory.mktemp("workspaces")
    return SandboxExecutor(demo_project, shim_dir=SHIM_DIR, timeout=5.0, work_base=work_base)


@pytest.fixture()
def quick_executor(demo_project, tmp_path) -> SandboxExecutor:
    """Executor with a tight timeout for tests that provoke hangs."""
    return SandboxExecutor(demo_project, shim_dir=SHIM_DIR, timeout=1.0, work_base=tmp_path)
