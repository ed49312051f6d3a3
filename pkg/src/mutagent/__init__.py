"""Mutation testing driven by an LLM debugging loop.

The pipeline: generate mutants of a Python project, drive a model through a
hypothesis/experiment/conclusion conversation per mutant until a test kills
it (or the session gives up / claims equivalence), then evaluate the
accumulated suite: flakiness filtering, kill matrix, mutation score, line
and branch coverage, and exact-dollar cost accounting.
"""

from .conversation import Approach, SessionOutcome
from .llm import PriceTable, TokenUsage, estimate_cost
from .mutation import Mutant, MutationPoint, OperatorKind, SubjectModule
from .sandbox import CoverageReport, ExecutionResult, SandboxExecutor, VerdictPair

__version__ = "0.1.0"

__all__ = [
    "Approach",
    "CoverageReport",
    "ExecutionResult",
    "Mutant",
    "MutationPoint",
    "OperatorKind",
    "PriceTable",
    "SandboxExecutor",
    "SessionOutcome",
    "SubjectModule",
    "TokenUsage",
    "VerdictPair",
    "estimate_cost",
    "__version__",
]
