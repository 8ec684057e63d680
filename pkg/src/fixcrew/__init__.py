"""Adaptive multi-agent debugging.

A lead agent analyzes a buggy program, decides how many specialist agents to
create and in what order, validates their candidate fix against the tests,
and replans with a novelty constraint when the fix fails. The bench module
measures fix rate and resource adaptivity against a one-shot baseline.
"""

from .types import (
    AgentProfile,
    AgentReport,
    BugCategory,
    BugInstance,
    ClaimedStatus,
    CodeAnalysis,
    ComparisonMode,
    ComplexityLevel,
    DebugPlan,
    ExecutionReport,
    ExecutionStatus,
    InvariantError,
    IterationRecord,
    ResourceLimits,
    SessionOutcome,
    TestCase,
    TestOutcome,
    Verdict,
    VerdictStatus,
)

__version__ = "0.1.0"

__all__ = [
    "AgentProfile",
    "AgentReport",
    "BugCategory",
    "BugInstance",
    "ClaimedStatus",
    "CodeAnalysis",
    "ComparisonMode",
    "ComplexityLevel",
    "DebugPlan",
    "ExecutionReport",
    "ExecutionStatus",
    "InvariantError",
    "IterationRecord",
    "ResourceLimits",
    "SessionOutcome",
    "TestCase",
    "TestOutcome",
    "Verdict",
    "VerdictStatus",
    "__version__",
]
