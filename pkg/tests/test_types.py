from __future__ import annotations

import json

import pytest

from fixcrew.types import (
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


def make_outcome() -> SessionOutcome:
    profiles = (
        AgentProfile("syntax_checker", "fix syntax", "repair the syntax", 1),
        AgentProfile("semantic_verifier", "check meaning", "verify semantics", 2),
    )
    plan = DebugPlan("syntax first", profiles, 1)
    report = AgentReport(
        role_name="syntax_checker",
        findings="missing colon",
        recommendations="add it",
        candidate_code="def f(x):\n    return x\n",
        claimed_status=ClaimedStatus.RESOLVED,
    )
    evidence = ExecutionReport(
        status=ExecutionStatus.ALL_PASSED,
        per_test=(TestOutcome(0, True, "7", ""),),
        duration_ms=12,
    )
    verdict = Verdict(VerdictStatus.FIXED, "all tests passed", "def f(x):\n    return x\n", evidence)
    record = IterationRecord(plan, (report,), verdict, "a1b2c3")
    return SessionOutcome("syn-001", True, (record,), 2, 5, 100)


def test_session_outcome_round_trips_through_canonical_json():
    outcome = make_outcome()
    wire = json.loads(json.dumps(outcome.to_dict()))
    assert SessionOutcome.from_dict(wire) == outcome


def test_bug_instance_round_trips(syntax_instance):
    wire = json.loads(json.dumps(syntax_instance.to_dict()))
    assert BugInstance.from_dict(wire) == syntax_instance


def test_canonical_field_names_are_snake_case():
    wire = make_outcome().to_dict()
    assert set(wire) == {
        "instance_id",
        "fixed",
        "iterations",
        "agents_created_total",
        "llm_calls",
        "wall_time_ms",
    }
    iteration = wire["iterations"][0]
    assert set(iteration) == {"plan", "reports", "verdict", "plan_signature"}
    assert iteration["verdict"]["status"] == "fixed"
    assert iteration["plan"]["profiles"][0]["role_name"] == "syntax_checker"


def test_unknown_labels_are_errors_not_defaults():
    with pytest.raises(InvariantError):
        BugCategory.parse("oob")
    with pytest.raises(InvariantError):
        ComplexityLevel.parse("extreme")
    assert BugCategory.parse("reference") is BugCategory.REFERENCE
    assert ComplexityLevel.parse("high") is ComplexityLevel.HIGH


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(id="", title="t", description="d", buggy_code="x", language="python",
             category=BugCategory.SYNTAX, complexity=ComplexityLevel.LOW),
        dict(id="a", title="t", description="d", buggy_code="", language="python",
             category=BugCategory.SYNTAX, complexity=ComplexityLevel.LOW),
    ],
)
def test_bug_instance_rejects_empty_required_fields(kwargs):
    with pytest.raises(InvariantError):
        BugInstance(**kwargs)


def test_test_case_numeric_requires_positive_tolerance():
    with pytest.raises(InvariantError):
        TestCase("1", "1.0", ComparisonMode.NUMERIC, tolerance=None)
    with pytest.raises(InvariantError):
        TestCase("1", "1.0", ComparisonMode.NUMERIC, tolerance=0.0)
    with pytest.raises(InvariantError):
        TestCase("1", "1", ComparisonMode.EXACT_TRIMMED, tolerance=0.5)
    assert TestCase("1", "1.0", ComparisonMode.NUMERIC, tolerance=1e-6).tolerance == 1e-6


def test_analysis_dedupes_categories_and_requires_content():
    analysis = CodeAnalysis(
        detected_categories=(BugCategory.SYNTAX, BugCategory.LOGIC, BugCategory.SYNTAX),
        summary="two kinds",
    )
    assert analysis.detected_categories == (BugCategory.SYNTAX, BugCategory.LOGIC)
    with pytest.raises(InvariantError):
        CodeAnalysis(detected_categories=(), summary="s")
    with pytest.raises(InvariantError):
        CodeAnalysis(detected_categories=(BugCategory.LOGIC,), summary="")


def test_profile_and_plan_invariants():
    with pytest.raises(InvariantError):
        AgentProfile("", "o", "t", 1)
    with pytest.raises(InvariantError):
        AgentProfile("r", "o", "", 1)
    with pytest.raises(InvariantError):
        AgentProfile("r", "o", "t", 0)
    good = AgentProfile("r", "o", "t", 1)
    with pytest.raises(InvariantError):
        DebugPlan("s", (), 1)
    with pytest.raises(InvariantError):
        DebugPlan("s", (good,), 0)
    with pytest.raises(InvariantError):
        DebugPlan("s", (good, AgentProfile("r2", "o", "t", 3)), 1)  # ranks 1,3
    plan = DebugPlan("s", (AgentProfile("b", "o", "t", 2), good), 1)
    assert [p.role_name for p in plan.ordered_profiles()] == ["r", "b"]


def test_report_resolved_requires_candidate():
    with pytest.raises(InvariantError):
        AgentReport("r", "f", "rec", None, ClaimedStatus.RESOLVED)
    report = AgentReport("r", "f", "rec", None, ClaimedStatus.BLOCKED)
    assert report.candidate_code is None


def test_execution_report_consistency():
    with pytest.raises(InvariantError):
        ExecutionReport(status=ExecutionStatus.ALL_PASSED)  # empty per_test
    with pytest.raises(InvariantError):
        ExecutionReport(
            status=ExecutionStatus.ALL_PASSED,
            per_test=(TestOutcome(0, True), TestOutcome(1, False)),
        )
    with pytest.raises(InvariantError):
        ExecutionReport(
            status=ExecutionStatus.SOME_FAILED, per_test=(TestOutcome(0, True),)
        )
    with pytest.raises(InvariantError):
        ExecutionReport(status=ExecutionStatus.TIMEOUT, duration_ms=-1)
    # A timed-out run may carry a fully-passing prefix of test results.
    partial = ExecutionReport(
        status=ExecutionStatus.TIMEOUT, per_test=(TestOutcome(0, True),), duration_ms=10
    )
    assert partial.failing_indices() == []


def test_verdict_invariants():
    with pytest.raises(InvariantError):
        Verdict(VerdictStatus.FIXED, "no code")
    failing_evidence = ExecutionReport(
        status=ExecutionStatus.SOME_FAILED,
        per_test=(TestOutcome(0, False, "wrong"),),
    )
    with pytest.raises(InvariantError):
        Verdict(VerdictStatus.FIXED, "bad evidence", "code", failing_evidence)
    ok = Verdict(VerdictStatus.NOT_FIXED, "still broken", None, failing_evidence)
    assert ok.evidence is failing_evidence


def test_iteration_record_caps_reports_at_plan_size():
    plan = DebugPlan("s", (AgentProfile("r", "o", "t", 1),), 1)
    report = AgentReport("r", "f", "rec", None, ClaimedStatus.PARTIAL)
    with pytest.raises(InvariantError):
        IterationRecord(plan, (report, report), Verdict(VerdictStatus.NOT_FIXED, "x"), "sig")
    record = IterationRecord(plan, (), Verdict(VerdictStatus.NOT_FIXED, "x"), "sig")
    assert record.reports == ()


def test_session_outcome_accounting_invariants():
    good = make_outcome()
    with pytest.raises(InvariantError):
        SessionOutcome("id", True, good.iterations, 99, 5, 100)  # wrong agent total
    with pytest.raises(InvariantError):
        SessionOutcome("id", False, good.iterations, 2, 5, 100)  # fixed flag contradicts verdict
    with pytest.raises(InvariantError):
        SessionOutcome("id", True, (), 0, 0, 0)  # fixed without iterations
    aborted = SessionOutcome("id", False, (), 0, 3, 10)
    assert aborted.agents_created_total == 0


def test_resource_limits_must_be_positive():
    for field in ("time_limit_ms", "memory_limit_mb", "total_session_budget_ms"):
        with pytest.raises(InvariantError):
            ResourceLimits(**{field: 0})
    assert ResourceLimits().time_limit_ms == 5000
    assert ResourceLimits().memory_limit_mb == 256
