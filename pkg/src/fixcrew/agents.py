"""Specialized-agent runtime.

A specialist is nothing but a profile (role, objective, task prompt) executed
once against the current state of the repair. It sees the reports of the
agents that ran before it in the same round plus the current best candidate,
works autonomously, and returns a structured report. Model-content failures
never raise: an unusable reply becomes a ``blocked`` report and the session
moves on to the next agent. Only transport-level failures propagate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .llm import LlmClient, StructuredOutputError, user
from .prompts import PromptCatalog
from .schemas import ReportDraft
from .types import AgentProfile, AgentReport, ClaimedStatus, CodeAnalysis


@dataclass(frozen=True)
class AgentContext:
    """What one specialist is allowed to see. The held-out reference solution
    is not part of the view; ``forbidden`` carries it (and any other secret
    texts) so the prompt renderer can enforce the firewall."""

    description: str
    language: str
    analysis: CodeAnalysis
    predecessor_reports: tuple[AgentReport, ...]
    current_best_code: str
    forbidden: tuple[str, ...] = ()


def format_reports(reports: Sequence[AgentReport]) -> str:
    """Compact textual block summarizing prior reports for a prompt."""
    if not reports:
        return "(none)"
    blocks = []
    for i, report in enumerate(reports, start=1):
        candidate = "included a candidate fix" if report.candidate_code else "no candidate code"
        blocks.append(
            f"{i}. {report.role_name} [{report.claimed_status.value}, {candidate}]\n"
            f"   findings: {report.findings or '(none)'}\n"
            f"   recommendations: {report.recommendations or '(none)'}"
        )
    return "\n".join(blocks)


def execute_task(
    profile: AgentProfile,
    context: AgentContext,
    client: LlmClient,
    catalog: PromptCatalog,
) -> AgentReport:
    """Run one specialist and normalize its reply into an AgentReport.

    The report always carries the dispatching profile's role name, whatever
    the model claimed. A ``resolved`` claim without candidate code is
    downgraded to ``partial``.
    """
    prompt = catalog.render(
        "specialized_task_v1",
        {
            "role_name": profile.role_name,
            "objective": profile.objective or "complete your assigned task",
            "task_prompt": profile.task_prompt,
            "description": context.description,
            "language": context.language,
            "current_code": context.current_best_code,
            "analysis_summary": context.analysis.summary,
            "predecessor_reports": format_reports(context.predecessor_reports),
        },
        forbidden=context.forbidden,
    )
    try:
        draft: ReportDraft = client.complete_structured([user(prompt)], "report_v1")
    except StructuredOutputError as exc:
        return AgentReport(
            role_name=profile.role_name,
            findings=f"agent reply was unusable after repairs; raw text: {exc.raw_text}",
            recommendations="",
            candidate_code=None,
            claimed_status=ClaimedStatus.BLOCKED,
        )
    status = draft.claimed_status
    if status is ClaimedStatus.RESOLVED and not draft.candidate_code:
        status = ClaimedStatus.PARTIAL
    return AgentReport(
        role_name=profile.role_name,
        findings=draft.findings,
        recommendations=draft.recommendations,
        candidate_code=draft.candidate_code,
        claimed_status=status,
    )
