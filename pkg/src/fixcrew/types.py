"""Domain model shared by every other module.

All types here are immutable values (frozen dataclasses, sequences stored as
tuples) so they can be handed freely between concurrent sessions. Constructors
validate their invariants and raise :class:`InvariantError` instead of letting
bad values propagate. Every type round-trips through the canonical JSON form
(snake_case field names) via ``to_dict`` / ``from_dict``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping, Optional


class InvariantError(ValueError):
    """A domain value violated one of its declared invariants."""


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise InvariantError(message)


def _as_str(d: Mapping[str, Any], key: str, *, optional: bool = False) -> Any:
    value = d.get(key)
    if value is None and optional:
        return None
    if not isinstance(value, str):
        raise InvariantError(f"field '{key}' must be a string, got {type(value).__name__}")
    return value


def _as_int(d: Mapping[str, Any], key: str) -> int:
    value = d.get(key)
    if isinstance(value, bool) or not isinstance(value, int):
        raise InvariantError(f"field '{key}' must be an integer, got {value!r}")
    return value


class BugCategory(str, Enum):
    SYNTAX = "syntax"
    REFERENCE = "reference"
    LOGIC = "logic"
    MULTIPLE = "multiple"

    @classmethod
    def parse(cls, label: str) -> "BugCategory":
        try:
            return cls(label)
        except ValueError:
            raise InvariantError(f"unknown bug category label: {label!r}") from None


class ComplexityLevel(str, Enum):
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"
    UNKNOWN = "unknown"

    @classmethod
    def parse(cls, label: str) -> "ComplexityLevel":
        try:
            return cls(label)
        except ValueError:
            raise InvariantError(f"unknown complexity label: {label!r}") from None


# easy/medium/hard are the difficulty labels used by the upstream benchmark
# release; anything outside this table is a load error, never a default.
DIFFICULTY_ALIASES = {
    "easy": ComplexityLevel.LOW,
    "medium": ComplexityLevel.MEDIUM,
    "hard": ComplexityLevel.HIGH,
    "low": ComplexityLevel.LOW,
    "high": ComplexityLevel.HIGH,
}


class ComparisonMode(str, Enum):
    EXACT_TRIMMED = "exact_trimmed"
    NUMERIC = "numeric"


@dataclass(frozen=True)
class TestCase:
    """One executable check: feed ``input`` on stdin, compare stdout."""

    __test__ = False  # keep pytest from collecting this as a test class

    input: str
    expected_output: str
    comparison: ComparisonMode = ComparisonMode.EXACT_TRIMMED
    tolerance: Optional[float] = None

    def __post_init__(self) -> None:
        if self.comparison is ComparisonMode.NUMERIC:
            _require(
                self.tolerance is not None and self.tolerance > 0,
                "numeric comparison requires tolerance > 0",
            )
        else:
            _require(self.tolerance is None, "tolerance only applies to numeric comparison")

    def to_dict(self) -> dict[str, Any]:
        return {
            "input": self.input,
            "expected_output": self.expected_output,
            "comparison": self.comparison.value,
            "tolerance": self.tolerance,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "TestCase":
        comparison = ComparisonMode(d.get("comparison", "exact_trimmed"))
        tolerance = d.get("tolerance")
        if tolerance is not None:
            tolerance = float(tolerance)
        return cls(
            input=_as_str(d, "input"),
            expected_output=_as_str(d, "expected_output"),
            comparison=comparison,
            tolerance=tolerance,
        )


@dataclass(frozen=True)
class BugInstance:
    """One buggy program plus everything needed to judge a fix.

    ``reference_solution`` is kept for offline analysis only; the prompt
    renderer refuses to emit it into any prompt text.
    """

    id: str
    title: str
    description: str
    buggy_code: str
    language: str
    category: BugCategory
    complexity: ComplexityLevel
    tests: tuple[TestCase, ...] = ()
    reference_solution: Optional[str] = None

    def __post_init__(self) -> None:
        _require(bool(self.id), "instance id must be nonempty")
        _require(bool(self.buggy_code), "buggy_code must be nonempty")
        object.__setattr__(self, "tests", tuple(self.tests))

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "title": self.title,
            "description": self.description,
            "buggy_code": self.buggy_code,
            "language": self.language,
            "category": self.category.value,
            "complexity": self.complexity.value,
            "tests": [t.to_dict() for t in self.tests],
            "reference_solution": self.reference_solution,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "BugInstance":
        tests = d.get("tests", [])
        if not isinstance(tests, list):
            raise InvariantError("field 'tests' must be a list")
        return cls(
            id=_as_str(d, "id"),
            title=_as_str(d, "title"),
            description=_as_str(d, "description"),
            buggy_code=_as_str(d, "buggy_code"),
            language=_as_str(d, "language"),
            category=BugCategory.parse(_as_str(d, "category")),
            complexity=ComplexityLevel.parse(_as_str(d, "complexity")),
            tests=tuple(TestCase.from_dict(t) for t in tests),
            reference_solution=_as_str(d, "reference_solution", optional=True),
        )


@dataclass(frozen=True)
class CodeAnalysis:
    """The lead agent's read of the bug: suspected categories plus evidence."""

    detected_categories: tuple[BugCategory, ...]
    summary: str
    evidence: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        deduped: list[BugCategory] = []
        for cat in self.detected_categories:
            if cat not in deduped:
                deduped.append(cat)
        object.__setattr__(self, "detected_categories", tuple(deduped))
        object.__setattr__(self, "evidence", tuple(self.evidence))
        _require(len(self.detected_categories) > 0, "detected_categories must be nonempty")
        _require(bool(self.summary), "analysis summary must be nonempty")

    def to_dict(self) -> dict[str, Any]:
        return {
            "detected_categories": [c.value for c in self.detected_categories],
            "summary": self.summary,
            "evidence": list(self.evidence),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "CodeAnalysis":
        cats = d.get("detected_categories")
        if not isinstance(cats, list):
            raise InvariantError("field 'detected_categories' must be a list")
        return cls(
            detected_categories=tuple(BugCategory.parse(str(c)) for c in cats),
            summary=_as_str(d, "summary"),
            evidence=tuple(str(e) for e in d.get("evidence", [])),
        )


@dataclass(frozen=True)
class AgentProfile:
    """Generated specification of one specialist: role, goal, task prompt."""

    role_name: str
    objective: str
    task_prompt: str
    priority: int

    def __post_init__(self) -> None:
        _require(bool(self.role_name), "role_name must be nonempty")
        _require(bool(self.task_prompt), "task_prompt must be nonempty")
        _require(self.priority >= 1, "priority must be >= 1")

    def to_dict(self) -> dict[str, Any]:
        return {
            "role_name": self.role_name,
            "objective": self.objective,
            "task_prompt": self.task_prompt,
            "priority": self.priority,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "AgentProfile":
        return cls(
            role_name=_as_str(d, "role_name"),
            objective=_as_str(d, "objective"),
            task_prompt=_as_str(d, "task_prompt"),
            priority=_as_int(d, "priority"),
        )


@dataclass(frozen=True)
class DebugPlan:
    """One iteration's ordered set of specialist profiles."""

    strategy_summary: str
    profiles: tuple[AgentProfile, ...]
    iteration_index: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "profiles", tuple(self.profiles))
        _require(len(self.profiles) >= 1, "plan needs at least one profile")
        _require(self.iteration_index >= 1, "iteration_index must be >= 1")
        ranks = sorted(p.priority for p in self.profiles)
        _require(
            ranks == list(range(1, len(self.profiles) + 1)),
            f"priorities must form a contiguous permutation 1..{len(self.profiles)}, got {ranks}",
        )

    def ordered_profiles(self) -> tuple[AgentProfile, ...]:
        return tuple(sorted(self.profiles, key=lambda p: p.priority))

    def to_dict(self) -> dict[str, Any]:
        return {
            "strategy_summary": self.strategy_summary,
            "profiles": [p.to_dict() for p in self.profiles],
            "iteration_index": self.iteration_index,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "DebugPlan":
        profiles = d.get("profiles")
        if not isinstance(profiles, list):
            raise InvariantError("field 'profiles' must be a list")
        return cls(
            strategy_summary=_as_str(d, "strategy_summary"),
            profiles=tuple(AgentProfile.from_dict(p) for p in profiles),
            iteration_index=_as_int(d, "iteration_index"),
        )


class ClaimedStatus(str, Enum):
    RESOLVED = "resolved"
    PARTIAL = "partial"
    BLOCKED = "blocked"


@dataclass(frozen=True)
class AgentReport:
    """What one specialist hands back to the lead agent."""

    role_name: str
    findings: str
    recommendations: str
    candidate_code: Optional[str]
    claimed_status: ClaimedStatus

    def __post_init__(self) -> None:
        _require(bool(self.role_name), "report role_name must be nonempty")
        if self.claimed_status is ClaimedStatus.RESOLVED:
            _require(bool(self.candidate_code), "a resolved report must carry candidate_code")

    def to_dict(self) -> dict[str, Any]:
        return {
            "role_name": self.role_name,
            "findings": self.findings,
            "recommendations": self.recommendations,
            "candidate_code": self.candidate_code,
            "claimed_status": self.claimed_status.value,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "AgentReport":
        return cls(
            role_name=_as_str(d, "role_name"),
            findings=_as_str(d, "findings"),
            recommendations=_as_str(d, "recommendations"),
            candidate_code=_as_str(d, "candidate_code", optional=True),
            claimed_status=ClaimedStatus(_as_str(d, "claimed_status")),
        )


class ExecutionStatus(str, Enum):
    ALL_PASSED = "all_passed"
    SOME_FAILED = "some_failed"
    COMPILE_OR_SYNTAX_ERROR = "compile_or_syntax_error"
    TIMEOUT = "timeout"
    RUNTIME_ERROR = "runtime_error"
    EXECUTOR_ERROR = "executor_error"


@dataclass(frozen=True)
class TestOutcome:
    __test__ = False  # keep pytest from collecting this as a test class

    index: int
    passed: bool
    actual_output: str = ""
    stderr_excerpt: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "index": self.index,
            "passed": self.passed,
            "actual_output": self.actual_output,
            "stderr_excerpt": self.stderr_excerpt,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "TestOutcome":
        return cls(
            index=_as_int(d, "index"),
            passed=bool(d.get("passed")),
            actual_output=str(d.get("actual_output", "")),
            stderr_excerpt=str(d.get("stderr_excerpt", "")),
        )


@dataclass(frozen=True)
class ExecutionReport:
    """Result of running a candidate against an instance's tests.

    ``all_passed`` requires a nonempty, fully passing ``per_test``;
    ``some_failed`` requires at least one failure. Partial runs (timeout,
    syntax error, executor error) may carry any prefix of per-test entries,
    including none.
    """

    status: ExecutionStatus
    per_test: tuple[TestOutcome, ...] = ()
    duration_ms: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "per_test", tuple(self.per_test))
        _require(self.duration_ms >= 0, "duration_ms must be >= 0")
        if self.status is ExecutionStatus.ALL_PASSED:
            _require(
                len(self.per_test) > 0 and all(t.passed for t in self.per_test),
                "all_passed requires a nonempty per_test with every test passed",
            )
        if self.status is ExecutionStatus.SOME_FAILED:
            _require(
                any(not t.passed for t in self.per_test),
                "some_failed requires at least one failing test",
            )

    def failing_indices(self) -> list[int]:
        return [t.index for t in self.per_test if not t.passed]

    def to_dict(self) -> dict[str, Any]:
        return {
            "status": self.status.value,
            "per_test": [t.to_dict() for t in self.per_test],
            "duration_ms": self.duration_ms,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ExecutionReport":
        per_test = d.get("per_test", [])
        if not isinstance(per_test, list):
            raise InvariantError("field 'per_test' must be a list")
        return cls(
            status=ExecutionStatus(_as_str(d, "status")),
            per_test=tuple(TestOutcome.from_dict(t) for t in per_test),
            duration_ms=_as_int(d, "duration_ms"),
        )


@dataclass(frozen=True)
class ResourceLimits:
    time_limit_ms: int = 5000
    memory_limit_mb: int = 256
    total_session_budget_ms: int = 120_000

    def __post_init__(self) -> None:
        _require(self.time_limit_ms > 0, "time_limit_ms must be positive")
        _require(self.memory_limit_mb > 0, "memory_limit_mb must be positive")
        _require(self.total_session_budget_ms > 0, "total_session_budget_ms must be positive")


class VerdictStatus(str, Enum):
    FIXED = "fixed"
    NOT_FIXED = "not_fixed"


@dataclass(frozen=True)
class Verdict:
    """The lead agent's call on one iteration's output."""

    status: VerdictStatus
    rationale: str
    final_code: Optional[str] = None
    evidence: Optional[ExecutionReport] = None

    def __post_init__(self) -> None:
        if self.status is VerdictStatus.FIXED:
            _require(bool(self.final_code), "a fixed verdict must carry final_code")
            if self.evidence is not None:
                _require(
                    self.evidence.status is ExecutionStatus.ALL_PASSED,
                    "a fixed verdict's evidence must have status all_passed",
                )

    def to_dict(self) -> dict[str, Any]:
        return {
            "status": self.status.value,
            "rationale": self.rationale,
            "final_code": self.final_code,
            "evidence": self.evidence.to_dict() if self.evidence else None,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Verdict":
        evidence = d.get("evidence")
        return cls(
            status=VerdictStatus(_as_str(d, "status")),
            rationale=_as_str(d, "rationale"),
            final_code=_as_str(d, "final_code", optional=True),
            evidence=ExecutionReport.from_dict(evidence) if evidence else None,
        )


@dataclass(frozen=True)
class IterationRecord:
    plan: DebugPlan
    reports: tuple[AgentReport, ...]
    verdict: Verdict
    plan_signature: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "reports", tuple(self.reports))
        _require(
            len(self.reports) <= len(self.plan.profiles),
            "an iteration cannot have more reports than planned agents",
        )
        _require(bool(self.plan_signature), "plan_signature must be nonempty")

    def to_dict(self) -> dict[str, Any]:
        return {
            "plan": self.plan.to_dict(),
            "reports": [r.to_dict() for r in self.reports],
            "verdict": self.verdict.to_dict(),
            "plan_signature": self.plan_signature,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "IterationRecord":
        reports = d.get("reports", [])
        if not isinstance(reports, list):
            raise InvariantError("field 'reports' must be a list")
        plan = d.get("plan")
        if not isinstance(plan, Mapping):
            raise InvariantError("field 'plan' must be an object")
        return cls(
            plan=DebugPlan.from_dict(plan),
            reports=tuple(AgentReport.from_dict(r) for r in reports),
            verdict=Verdict.from_dict(d.get("verdict") or {}),
            plan_signature=_as_str(d, "plan_signature"),
        )


@dataclass(frozen=True)
class SessionOutcome:
    """Full audit record of one debugging session.

    ``iterations`` is empty only when the session aborted before the first
    plan (analysis failure); such outcomes are always ``fixed=False``.
    """

    instance_id: str
    fixed: bool
    iterations: tuple[IterationRecord, ...]
    agents_created_total: int
    llm_calls: int
    wall_time_ms: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "iterations", tuple(self.iterations))
        _require(bool(self.instance_id), "instance_id must be nonempty")
        expected_agents = sum(len(it.plan.profiles) for it in self.iterations)
        _require(
            self.agents_created_total == expected_agents,
            f"agents_created_total must equal the sum of accepted plan sizes "
            f"({expected_agents}), got {self.agents_created_total}",
        )
        last_fixed = bool(self.iterations) and (
            self.iterations[-1].verdict.status is VerdictStatus.FIXED
        )
        _require(self.fixed == last_fixed, "fixed must mirror the last verdict")
        _require(self.llm_calls >= 0, "llm_calls must be >= 0")
        _require(self.wall_time_ms >= 0, "wall_time_ms must be >= 0")

    def to_dict(self) -> dict[str, Any]:
        return {
            "instance_id": self.instance_id,
            "fixed": self.fixed,
            "iterations": [it.to_dict() for it in self.iterations],
            "agents_created_total": self.agents_created_total,
            "llm_calls": self.llm_calls,
            "wall_time_ms": self.wall_time_ms,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "SessionOutcome":
        iterations = d.get("iterations", [])
        if not isinstance(iterations, list):
            raise InvariantError("field 'iterations' must be a list")
        return cls(
            instance_id=_as_str(d, "instance_id"),
            fixed=bool(d.get("fixed")),
            iterations=tuple(IterationRecord.from_dict(it) for it in iterations),
            agents_created_total=_as_int(d, "agents_created_total"),
            llm_calls=_as_int(d, "llm_calls"),
            wall_time_ms=_as_int(d, "wall_time_ms"),
        )
