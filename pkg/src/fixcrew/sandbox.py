"""Run candidate fixes against an instance's tests via a pluggable executor.

Three executors implement the same contract:

- :class:`ScriptedExecutor` — a pure function of (candidate, tests, limits),
  used by the deterministic test suite;
- :class:`SubprocessExecutor` — drives an external runner process over the
  JSON stdin/stdout shim protocol (protocol_version 1);
- :class:`ReplayExecutor` — re-serves the execution events recorded in a
  session transcript.

The orchestrator's fixed/not-fixed decision depends only on
``ExecutionReport.status``, never on re-derived per-test data.
"""

from __future__ import annotations

import hashlib
import json
import logging
import subprocess
from typing import Any, Callable, Protocol, Sequence

from .llm import ReplayMismatch
from .types import (
    ComparisonMode,
    ExecutionReport,
    ExecutionStatus,
    InvariantError,
    ResourceLimits,
    TestCase,
    TestOutcome,
)

logger = logging.getLogger(__name__)

PROTOCOL_VERSION = 1

# Wire statuses of the shim protocol mapped onto report statuses.
_WIRE_STATUS = {
    "all_passed": ExecutionStatus.ALL_PASSED,
    "some_failed": ExecutionStatus.SOME_FAILED,
    "syntax_error": ExecutionStatus.COMPILE_OR_SYNTAX_ERROR,
    "timeout": ExecutionStatus.TIMEOUT,
    "runtime_error": ExecutionStatus.RUNTIME_ERROR,
}


class SandboxUnavailable(RuntimeError):
    """Test-gated validation was requested but no executor is configured."""


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def compare_exact_trimmed(expected: str, actual: str) -> bool:
    """Line-by-line equality after trimming trailing whitespace and trailing
    blank lines on both sides."""

    def canon(text: str) -> list[str]:
        lines = [line.rstrip() for line in text.splitlines()]
        while lines and lines[-1] == "":
            lines.pop()
        return lines

    return canon(expected) == canon(actual)


def compare_numeric(expected: str, actual: str, tolerance: float) -> bool:
    """Token-wise float comparison within ``tolerance``."""
    exp_tokens = expected.split()
    act_tokens = actual.split()
    if len(exp_tokens) != len(act_tokens):
        return False
    try:
        return all(
            abs(float(e) - float(a)) <= tolerance for e, a in zip(exp_tokens, act_tokens)
        )
    except ValueError:
        return False


def test_passes(test: TestCase, actual_output: str) -> bool:
    if test.comparison is ComparisonMode.NUMERIC:
        assert test.tolerance is not None
        return compare_numeric(test.expected_output, actual_output, test.tolerance)
    return compare_exact_trimmed(test.expected_output, actual_output)


class Executor(Protocol):
    def run(
        self, candidate: str, tests: Sequence[TestCase], limits: ResourceLimits
    ) -> ExecutionReport: ...


class ScriptedExecutor:
    """Deterministic executor backed by a pure decision function."""

    def __init__(self, decide: Callable[[str, Sequence[TestCase]], ExecutionReport]):
        self._decide = decide

    def run(
        self, candidate: str, tests: Sequence[TestCase], limits: ResourceLimits
    ) -> ExecutionReport:
        return self._decide(candidate, tests)


class SubprocessExecutor:
    """Spawns the runner command, writes one job object to stdin, reads one
    result object from stdout. A nonzero exit, malformed JSON, or an unknown
    wire status is an executor error, never a silent pass."""

    def __init__(self, command: Sequence[str], language: str = "python"):
        if not command:
            raise ValueError("executor command must be nonempty")
        self.command = list(command)
        self.language = language

    def run(
        self, candidate: str, tests: Sequence[TestCase], limits: ResourceLimits
    ) -> ExecutionReport:
        job = {
            "protocol_version": PROTOCOL_VERSION,
            "language": self.language,
            "code": candidate,
            "tests": [{"input": t.input, "expected_output": t.expected_output} for t in tests],
            "time_limit_ms": limits.time_limit_ms,
            "memory_limit_mb": limits.memory_limit_mb,
        }
        # Whole-job guard: per-test limits are the shim's business, this only
        # protects against a hung or runaway runner process.
        budget_ms = min(
            limits.total_session_budget_ms,
            limits.time_limit_ms * max(1, len(tests)) + 10_000,
        )
        try:
            proc = subprocess.run(
                self.command,
                input=json.dumps(job),
                capture_output=True,
                text=True,
                timeout=budget_ms / 1000.0,
            )
        except FileNotFoundError as exc:
            logger.warning("executor command not found: %s", exc)
            return ExecutionReport(status=ExecutionStatus.EXECUTOR_ERROR)
        except subprocess.TimeoutExpired:
            logger.warning("executor exceeded the whole-job budget of %dms", budget_ms)
            return ExecutionReport(status=ExecutionStatus.EXECUTOR_ERROR)
        if proc.returncode != 0:
            logger.warning(
                "executor exited %d: %s", proc.returncode, (proc.stderr or "")[:200]
            )
            return ExecutionReport(status=ExecutionStatus.EXECUTOR_ERROR)
        return self._parse_result(proc.stdout)

    @staticmethod
    def _parse_result(stdout: str) -> ExecutionReport:
        try:
            data = json.loads(stdout)
        except json.JSONDecodeError:
            logger.warning("executor wrote malformed JSON: %r", stdout[:200])
            return ExecutionReport(status=ExecutionStatus.EXECUTOR_ERROR)
        if not isinstance(data, dict) or data.get("status") not in _WIRE_STATUS:
            logger.warning("executor wrote an unknown status: %r", stdout[:200])
            return ExecutionReport(status=ExecutionStatus.EXECUTOR_ERROR)
        per_test = []
        for entry in data.get("per_test") or []:
            if not isinstance(entry, dict):
                return ExecutionReport(status=ExecutionStatus.EXECUTOR_ERROR)
            per_test.append(
                TestOutcome(
                    index=int(entry.get("index", len(per_test))),
                    passed=bool(entry.get("passed")),
                    actual_output=str(entry.get("actual_output", "")),
                    stderr_excerpt=str(entry.get("stderr_excerpt", "")),
                )
            )
        try:
            return ExecutionReport(
                status=_WIRE_STATUS[data["status"]],
                per_test=tuple(per_test),
                duration_ms=int(data.get("duration_ms") or 0),
            )
        except (InvariantError, ValueError):
            # e.g. "all_passed" with a failing per_test entry: protocol breach.
            logger.warning("executor result violates report invariants")
            return ExecutionReport(status=ExecutionStatus.EXECUTOR_ERROR)


class ReplayExecutor:
    """Re-serves recorded execution reports, verifying the candidate hash."""

    def __init__(self, execution_events: Sequence[dict[str, Any]]):
        self._events = list(execution_events)
        self._index = 0

    def run(
        self, candidate: str, tests: Sequence[TestCase], limits: ResourceLimits
    ) -> ExecutionReport:
        if self._index >= len(self._events):
            raise ReplayMismatch("recording has no further execution events")
        event = self._events[self._index]
        expected = event.get("candidate_sha256", "")
        actual = sha256_text(candidate)
        if expected != actual:
            raise ReplayMismatch(
                f"execution #{self._index} diverged from the recording "
                f"(recorded candidate {expected[:12]}…, got {actual[:12]}…)"
            )
        self._index += 1
        return ExecutionReport.from_dict(event.get("report") or {})


def replay_executor(transcript_path: str) -> ReplayExecutor:
    from .transcript import read_events

    return ReplayExecutor(read_events(transcript_path, kind="execution"))


def evaluate_candidate(
    candidate: str,
    tests: Sequence[TestCase],
    limits: ResourceLimits,
    executor: Executor,
) -> ExecutionReport:
    """Run every test against ``candidate`` and report the outcome.

    The shim protocol only knows trimmed-exact comparison, so tests flagged
    for numeric comparison are re-judged here from the captured output; the
    executor's verdicts on exact tests are authoritative.
    """
    if not tests:
        raise InvariantError("evaluate_candidate requires at least one test")
    report = executor.run(candidate, tuple(tests), limits)

    needs_numeric = any(t.comparison is ComparisonMode.NUMERIC for t in tests)
    rescorable = report.status in (ExecutionStatus.ALL_PASSED, ExecutionStatus.SOME_FAILED)
    if not (needs_numeric and rescorable and report.per_test):
        return report

    adjusted = []
    for entry in report.per_test:
        if 0 <= entry.index < len(tests):
            test = tests[entry.index]
            if test.comparison is ComparisonMode.NUMERIC:
                entry = TestOutcome(
                    index=entry.index,
                    passed=test_passes(test, entry.actual_output),
                    actual_output=entry.actual_output,
                    stderr_excerpt=entry.stderr_excerpt,
                )
        adjusted.append(entry)
    status = (
        ExecutionStatus.ALL_PASSED
        if all(t.passed for t in adjusted)
        else ExecutionStatus.SOME_FAILED
    )
    return ExecutionReport(
        status=status, per_test=tuple(adjusted), duration_ms=report.duration_ms
    )
