"""Builders shared across the test suite: canned model replies, scripted
executors, and synthetic outcomes."""

from __future__ import annotations

import json
from typing import Iterable, Optional, Sequence

from fixcrew.sandbox import ScriptedExecutor
from fixcrew.types import (
    AgentProfile,
    DebugPlan,
    ExecutionReport,
    ExecutionStatus,
    IterationRecord,
    SessionOutcome,
    TestCase,
    TestOutcome,
    Verdict,
    VerdictStatus,
)

GARBAGE_REPLIES = [
    "I could not find anything wrong with the code.",
    "```python\nprint('not json')\n```",
    "{not valid json at all",
    "[]",
    "null",
]


def analysis_reply(
    categories: Iterable[str] = ("syntax",),
    summary: str = "diagnosed the defect",
    evidence: Iterable[str] = (),
) -> str:
    return json.dumps(
        {
            "detected_categories": list(categories),
            "summary": summary,
            "evidence": list(evidence),
        }
    )


def profiles_reply(summary: str, *roles: str | tuple[str, str, str]) -> str:
    profiles = []
    for role in roles:
        if isinstance(role, tuple):
            name, objective, task = role
        else:
            name, objective, task = role, f"handle {role} work", f"You are the {role}. Repair the code and return the full program."
        profiles.append({"role_name": name, "objective": objective, "task_prompt": task})
    return json.dumps({"strategy_summary": summary, "profiles": profiles})


def priorities_reply(mapping: dict[str, int]) -> str:
    return json.dumps({"priorities": mapping})


def report_reply(
    status: str = "resolved",
    code: Optional[str] = "fixed code",
    findings: str = "found the problem",
    recommendations: str = "ship it",
) -> str:
    return json.dumps(
        {
            "findings": findings,
            "recommendations": recommendations,
            "candidate_code": code,
            "claimed_status": status,
        }
    )


def verdict_reply(status: str = "fixed", rationale: str = "looks right") -> str:
    return json.dumps({"status": status, "rationale": rationale, "final_code": None})


def passing_per_test(tests: Sequence[TestCase]) -> tuple[TestOutcome, ...]:
    return tuple(
        TestOutcome(index=i, passed=True, actual_output=t.expected_output)
        for i, t in enumerate(tests)
    )


def marker_executor(marker: str, failing_index: int = 1) -> ScriptedExecutor:
    """All tests pass iff the candidate contains ``marker``; otherwise one
    test (``failing_index``, clamped) fails. Pure in (candidate, tests)."""

    def decide(candidate: str, tests: Sequence[TestCase]) -> ExecutionReport:
        if marker in candidate:
            return ExecutionReport(
                status=ExecutionStatus.ALL_PASSED,
                per_test=passing_per_test(tests),
                duration_ms=5,
            )
        fail_at = min(failing_index, len(tests) - 1)
        per_test = tuple(
            TestOutcome(
                index=i,
                passed=i != fail_at,
                actual_output=t.expected_output if i != fail_at else "wrong",
            )
            for i, t in enumerate(tests)
        )
        return ExecutionReport(
            status=ExecutionStatus.SOME_FAILED, per_test=per_test, duration_ms=5
        )

    return ScriptedExecutor(decide)


def forged_execution_report(
    status: ExecutionStatus, per_test: Sequence[TestOutcome], duration_ms: int = 0
) -> ExecutionReport:
    """Construct an ExecutionReport bypassing invariant checks, to probe that
    downstream logic depends only on the status field."""
    report = object.__new__(ExecutionReport)
    object.__setattr__(report, "status", status)
    object.__setattr__(report, "per_test", tuple(per_test))
    object.__setattr__(report, "duration_ms", duration_ms)
    return report


def synth_outcome(
    instance_id: str,
    fixed: bool,
    llm_calls: int = 1,
    agents: int = 1,
    iterations: int = 1,
) -> SessionOutcome:
    """Structurally-valid outcome for metrics tests, with ``agents`` spread
    over ``iterations`` plans (the first plan absorbs the surplus)."""
    assert agents >= iterations >= 1
    sizes = [1] * iterations
    sizes[0] += agents - iterations
    records = []
    for index, size in enumerate(sizes, start=1):
        plan = DebugPlan(
            strategy_summary=f"synthetic strategy {index}",
            profiles=tuple(
                AgentProfile(f"agent_{i}", "fix", "fix the bug", i + 1) for i in range(size)
            ),
            iteration_index=index,
        )
        last = index == iterations
        verdict = (
            Verdict(VerdictStatus.FIXED, "synthetic pass", final_code="code")
            if fixed and last
            else Verdict(VerdictStatus.NOT_FIXED, "synthetic fail")
        )
        records.append(IterationRecord(plan, (), verdict, f"synthetic-sig-{index}"))
    return SessionOutcome(
        instance_id=instance_id,
        fixed=fixed,
        iterations=tuple(records),
        agents_created_total=agents,
        llm_calls=llm_calls,
        wall_time_ms=0,
    )


def low_complexity_script() -> list[str]:
    """Analysis, a one-agent plan, one resolved report: the minimal session."""
    fixed_code = "def f(x):\n    return x\nprint(f(input()))\n"
    return [
        analysis_reply(["syntax"], "missing colon on the def line"),
        profiles_reply(
            "single syntax repair pass",
            ("syntax_checker", "repair the syntax error", "Fix syntax."),
        ),
        report_reply("resolved", fixed_code, findings="missing colon"),
    ]


def high_complexity_script() -> list[str]:
    """Two iterations: a failing two-agent plan, then a three-agent replan
    whose first report carries the passing candidate (marker FIXED_V2)."""
    return [
        analysis_reply(["multiple"], "several interacting bugs"),
        profiles_reply(
            "fix references then logic",
            ("reference_fixer", "repair names", "Fix name errors."),
            ("logic_fixer", "repair logic", "Fix the logic."),
        ),
        priorities_reply({"reference_fixer": 1, "logic_fixer": 2}),
        report_reply("partial", "attempt v1"),
        report_reply("resolved", "attempt v1b"),
        profiles_reply(
            "rewrite the core loop with bounds checks",
            ("algorithm_rewriter", "rewrite the loop", "Rewrite it."),
            ("bounds_checker", "check the bounds", "Check bounds."),
            ("verifier", "verify behaviour", "Verify."),
        ),
        priorities_reply({"algorithm_rewriter": 1, "bounds_checker": 2, "verifier": 3}),
        report_reply("resolved", "rewritten FIXED_V2 code"),
        report_reply("partial", None),
        report_reply("partial", None),
    ]


class CaptureBackend:
    """Scripted backend that also records every request's messages."""

    def __init__(self, responses: Sequence[str]):
        from fixcrew.llm import ScriptedBackend

        self._inner = ScriptedBackend(responses)
        self.seen: list[list[dict]] = []

    @property
    def calls(self) -> int:
        return self._inner.calls

    def complete(self, config, messages):
        self.seen.append([m.to_dict() for m in messages])
        return self._inner.complete(config, messages)
