"""The lead agent: analysis, team profiling, prioritization, validation, and
the bounded replanning loop.

One session is strictly sequential: analyze the bug once, then per iteration
profile a team, order it, dispatch the specialists one by one (each seeing its
predecessors' reports), and validate the best candidate. Replanning feeds the
full history back and requires a strategy whose plan signature differs from
every prior one; a collision triggers exactly one forced re-ask, after which
the plan is accepted with an explicit collision flag in the transcript.

Model-content failures degrade step by step (fallback profile, fallback
ordering, blocked reports, not-fixed verdicts) so a session always terminates
within its iteration and agent caps, whatever the backend does.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional, Sequence

from .agents import AgentContext, execute_task, format_reports
from .llm import Backend, LlmClient, LlmError, ModelConfig, user
from .prompts import DEFAULT_TEMPLATE_DIR, PromptCatalog, load_catalog
from .sandbox import Executor, SandboxUnavailable, evaluate_candidate, sha256_text
from .schemas import ProfilingDraft, VerdictDraft
from .transcript import TranscriptWriter
from .types import (
    AgentProfile,
    AgentReport,
    BugInstance,
    ClaimedStatus,
    CodeAnalysis,
    DebugPlan,
    ExecutionStatus,
    IterationRecord,
    ResourceLimits,
    SessionOutcome,
    Verdict,
    VerdictStatus,
    _require,
)

logger = logging.getLogger(__name__)


class AnalysisFailed(RuntimeError):
    """Code analysis produced nothing usable; the session aborts unfixed."""


class ValidationMode(str, Enum):
    TEST_GATED = "test_gated"
    LLM_JUDGED = "llm_judged"


@dataclass(frozen=True)
class OrchestratorConfig:
    max_iterations: int = 3
    max_agents: int = 5
    validation_mode: Optional[ValidationMode] = None  # None: pick per instance
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self) -> None:
        _require(self.max_iterations >= 1, "max_iterations must be >= 1")
        _require(self.max_agents >= 1, "max_agents must be >= 1")

    def resolve_mode(self, instance: BugInstance) -> ValidationMode:
        if self.validation_mode is not None:
            if self.validation_mode is ValidationMode.TEST_GATED:
                _require(len(instance.tests) >= 1, "test-gated validation requires tests")
            return self.validation_mode
        return ValidationMode.TEST_GATED if instance.tests else ValidationMode.LLM_JUDGED


def normalize_role(name: str) -> str:
    return re.sub(r"[\s_\-]+", "_", name.strip().lower())


def plan_signature(plan: DebugPlan) -> str:
    """Stable hash of the ordered (role, objective) pairs of a plan.

    Role names are case/whitespace/separator-insensitive; order matters, so
    the same roles in a different priority order sign differently.
    """
    pairs = [
        [normalize_role(p.role_name), " ".join(p.objective.split())]
        for p in plan.ordered_profiles()
    ]
    digest = hashlib.sha256(json.dumps(pairs, ensure_ascii=False).encode("utf-8"))
    return digest.hexdigest()[:16]


@dataclass(frozen=True)
class ProfilingOutcome:
    profiles: tuple[AgentProfile, ...]  # priorities hold the model-given order
    strategy_summary: str
    truncated_from: Optional[int] = None
    fallback: bool = False


def _redacted_instance(instance: BugInstance) -> dict:
    d = instance.to_dict()
    d["reference_solution"] = None
    return d


class Orchestrator:
    """Reusable across sessions; per-session state lives in locals."""

    def __init__(
        self,
        config: OrchestratorConfig,
        catalog: Optional[PromptCatalog] = None,
        executor: Optional[Executor] = None,
        limits: ResourceLimits = ResourceLimits(),
    ):
        self.config = config
        self.catalog = catalog if catalog is not None else load_catalog(DEFAULT_TEMPLATE_DIR)
        self.executor = executor
        self.limits = limits

    # ----- individual lead-agent operations ---------------------------------

    def analyze_code(self, instance: BugInstance, client: LlmClient) -> CodeAnalysis:
        prompt = self.catalog.render(
            "main_analysis_v1",
            {
                "description": instance.description,
                "language": instance.language,
                "buggy_code": instance.buggy_code,
            },
            forbidden=self._forbidden(instance),
        )
        try:
            return client.complete_structured([user(prompt)], "analysis_v1")
        except LlmError as exc:
            raise AnalysisFailed(str(exc)) from exc

    def profile_agents(
        self,
        analysis: CodeAnalysis,
        instance: BugInstance,
        history: Sequence[IterationRecord],
        client: LlmClient,
    ) -> ProfilingOutcome:
        """Ask for a team; replanning prompts embed all prior strategies and
        demand a different one. Oversized teams are truncated, never refused,
        and an unusable reply degrades to a single generalist profile."""
        if history:
            previous = "\n".join(
                f"{i}. {it.plan.strategy_summary or '(unnamed strategy)'} "
                f"[signature {it.plan_signature}]"
                for i, it in enumerate(history, start=1)
            )
            prompt = self.catalog.render(
                "replan_v1",
                {
                    "description": instance.description,
                    "language": instance.language,
                    "buggy_code": instance.buggy_code,
                    "analysis_summary": analysis.summary,
                    "previous_strategies": previous,
                    "latest_reports": format_reports(history[-1].reports),
                    "max_agents": str(self.config.max_agents),
                },
                forbidden=self._forbidden(instance),
            )
        else:
            prompt = self.catalog.render(
                "profiling_v1",
                {
                    "description": instance.description,
                    "language": instance.language,
                    "buggy_code": instance.buggy_code,
                    "analysis_summary": analysis.summary,
                    "detected_categories": ", ".join(
                        c.value for c in analysis.detected_categories
                    ),
                    "max_agents": str(self.config.max_agents),
                },
                forbidden=self._forbidden(instance),
            )
        try:
            draft: ProfilingDraft = client.complete_structured([user(prompt)], "profiles_v1")
        except LlmError as exc:
            logger.warning("profiling degraded to fallback profile: %s", exc)
            return self._fallback_profiling(analysis)

        specs = draft.profiles
        truncated_from = None
        if len(specs) > self.config.max_agents:
            truncated_from = len(specs)
            specs = specs[: self.config.max_agents]
        profiles = tuple(
            AgentProfile(
                role_name=s.role_name,
                objective=s.objective,
                task_prompt=s.task_prompt,
                priority=i + 1,
            )
            for i, s in enumerate(specs)
        )
        summary = draft.strategy_summary or "roles: " + " -> ".join(
            p.role_name for p in profiles
        )
        return ProfilingOutcome(profiles, summary, truncated_from)

    def _fallback_profiling(self, analysis: CodeAnalysis) -> ProfilingOutcome:
        categories = ", ".join(c.value for c in analysis.detected_categories)
        profile = AgentProfile(
            role_name="general_debugger",
            objective=f"repair the {categories} issue(s) and return corrected code",
            task_prompt=(
                "Review the program, identify the defect described in the lead "
                "analysis, repair it, and return the complete corrected program."
            ),
            priority=1,
        )
        return ProfilingOutcome(
            profiles=(profile,),
            strategy_summary="fallback: single general debugging pass",
            fallback=True,
        )

    def prioritize(
        self,
        profiles: Sequence[AgentProfile],
        analysis: CodeAnalysis,
        client: LlmClient,
        strategy_summary: str,
        iteration_index: int,
    ) -> DebugPlan:
        """Order the team. A single profile never costs a model call; an
        unusable or non-permutation ranking keeps the model-given order."""
        profiles = tuple(profiles)
        _require(len(profiles) >= 1, "prioritize requires at least one profile")
        if len(profiles) > 1 and len({normalize_role(p.role_name) for p in profiles}) == len(
            profiles
        ):
            roles_block = "\n".join(
                f"- {p.role_name}: {p.objective or '(no stated objective)'}" for p in profiles
            )
            prompt = self.catalog.render(
                "prioritization_v1",
                {"analysis_summary": analysis.summary, "roles_block": roles_block},
            )
            try:
                ranking = client.complete_structured([user(prompt)], "priorities_v1")
                ranked = self._apply_ranking(profiles, ranking)
                if ranked is not None:
                    profiles = ranked
                else:
                    logger.warning("ranking was not a permutation; keeping given order")
            except LlmError as exc:
                logger.warning("prioritization degraded to given order: %s", exc)
        return DebugPlan(
            strategy_summary=strategy_summary,
            profiles=profiles,
            iteration_index=iteration_index,
        )

    @staticmethod
    def _apply_ranking(
        profiles: tuple[AgentProfile, ...], ranking: dict[str, int]
    ) -> Optional[tuple[AgentProfile, ...]]:
        by_role = {normalize_role(role): rank for role, rank in ranking.items()}
        ranks = []
        for p in profiles:
            rank = by_role.get(normalize_role(p.role_name))
            if rank is None:
                return None
            ranks.append(rank)
        if sorted(ranks) != list(range(1, len(profiles) + 1)):
            return None
        return tuple(replace(p, priority=rank) for p, rank in zip(profiles, ranks))

    def validate(
        self,
        instance: BugInstance,
        reports: Sequence[AgentReport],
        mode: ValidationMode,
        client: LlmClient,
        transcript: Optional[TranscriptWriter] = None,
        iteration: int = 1,
    ) -> Verdict:
        candidate = select_candidate(reports)
        if candidate is None:
            return Verdict(
                status=VerdictStatus.NOT_FIXED,
                rationale="no agent produced candidate code; nothing to validate",
            )
        if mode is ValidationMode.TEST_GATED:
            if self.executor is None:
                raise SandboxUnavailable(
                    "test-gated validation requested but no executor is configured"
                )
            report = evaluate_candidate(candidate, instance.tests, self.limits, self.executor)
            if transcript is not None:
                transcript.write(
                    "execution",
                    iteration=iteration,
                    candidate_sha256=sha256_text(candidate),
                    report=report.to_dict(),
                )
            if report.status is ExecutionStatus.ALL_PASSED:
                return Verdict(
                    status=VerdictStatus.FIXED,
                    rationale=f"sandbox: all {len(report.per_test)} tests passed",
                    final_code=candidate,
                    evidence=report,
                )
            failing = report.failing_indices()
            rationale = (
                f"sandbox: tests failed at indices {failing}"
                if failing
                else f"sandbox: execution ended with status {report.status.value}"
            )
            return Verdict(status=VerdictStatus.NOT_FIXED, rationale=rationale, evidence=report)

        prompt = self.catalog.render(
            "validation_v1",
            {
                "description": instance.description,
                "candidate_code": candidate,
                "reports_block": format_reports(reports),
            },
            forbidden=self._forbidden(instance),
        )
        try:
            draft: VerdictDraft = client.complete_structured([user(prompt)], "verdict_v1")
        except LlmError as exc:
            return Verdict(
                status=VerdictStatus.NOT_FIXED,
                rationale=f"validation unavailable: {exc}",
            )
        if draft.status is VerdictStatus.FIXED:
            # The lead agent judges and selects; it never writes code, so the
            # accepted code is the selected candidate, not the model's text.
            return Verdict(
                status=VerdictStatus.FIXED,
                rationale=draft.rationale or "judged fixed by the lead agent",
                final_code=candidate,
            )
        return Verdict(
            status=VerdictStatus.NOT_FIXED,
            rationale=draft.rationale or "judged not fixed by the lead agent",
        )

    # ----- the session loop -------------------------------------------------

    def run_session(
        self,
        instance: BugInstance,
        backend: Backend,
        transcript_path: Optional[str] = None,
    ) -> SessionOutcome:
        started = time.monotonic()
        mode = self.config.resolve_mode(instance)
        if mode is ValidationMode.TEST_GATED and self.executor is None:
            raise SandboxUnavailable(
                "test-gated validation requested but no executor is configured"
            )
        writer = TranscriptWriter(transcript_path) if transcript_path else None
        client = LlmClient(self.config.model, backend, writer)
        try:
            if writer is not None:
                writer.write(
                    "session_start",
                    instance=_redacted_instance(instance),
                    config={
                        "max_iterations": self.config.max_iterations,
                        "max_agents": self.config.max_agents,
                        "validation_mode": mode.value,
                        "model": {
                            "backend_kind": self.config.model.backend_kind.value,
                            "model_name": self.config.model.model_name,
                            "temperature": self.config.model.temperature,
                            "max_tokens": self.config.model.max_tokens,
                        },
                        "prompt_versions": self.catalog.versions(),
                    },
                )
            try:
                analysis = self.analyze_code(instance, client)
            except AnalysisFailed as exc:
                logger.warning("%s: analysis failed, aborting session: %s", instance.id, exc)
                return self._finish(
                    instance, (), client, writer, started, reason=f"analysis failed: {exc}"
                )
            if writer is not None:
                writer.write("analysis", analysis=analysis.to_dict())

            history: list[IterationRecord] = []
            seen_signatures: set[str] = set()
            for iteration in range(1, self.config.max_iterations + 1):
                plan, signature, truncated_from, collided = self._plan_iteration(
                    analysis, instance, history, client, iteration, seen_signatures
                )
                seen_signatures.add(signature)
                if writer is not None:
                    if collided:
                        writer.write(
                            "novelty_collision", iteration=iteration, signature=signature
                        )
                    payload = {
                        "iteration": iteration,
                        "plan": plan.to_dict(),
                        "signature": signature,
                    }
                    if truncated_from is not None:
                        payload["truncated_from"] = truncated_from
                    writer.write("plan", **payload)

                reports = self._dispatch(plan, instance, analysis, client, writer, iteration)
                verdict = self.validate(instance, reports, mode, client, writer, iteration)
                if writer is not None:
                    writer.write("verdict", iteration=iteration, verdict=verdict.to_dict())
                history.append(
                    IterationRecord(
                        plan=plan,
                        reports=reports,
                        verdict=verdict,
                        plan_signature=signature,
                    )
                )
                if verdict.status is VerdictStatus.FIXED:
                    break
            return self._finish(instance, tuple(history), client, writer, started)
        finally:
            if writer is not None:
                writer.close()

    def _plan_iteration(
        self,
        analysis: CodeAnalysis,
        instance: BugInstance,
        history: Sequence[IterationRecord],
        client: LlmClient,
        iteration: int,
        seen_signatures: set[str],
    ) -> tuple[DebugPlan, str, Optional[int], bool]:
        """Profile + prioritize, re-asking once if the signature repeats.

        Returns (plan, signature, truncated_from, accepted_with_collision).
        """
        profiling = self.profile_agents(analysis, instance, history, client)
        plan = self.prioritize(
            profiling.profiles, analysis, client, profiling.strategy_summary, iteration
        )
        signature = plan_signature(plan)
        if signature not in seen_signatures:
            return plan, signature, profiling.truncated_from, False

        profiling = self.profile_agents(analysis, instance, history, client)
        plan = self.prioritize(
            profiling.profiles, analysis, client, profiling.strategy_summary, iteration
        )
        signature = plan_signature(plan)
        collided = signature in seen_signatures
        return plan, signature, profiling.truncated_from, collided

    def _dispatch(
        self,
        plan: DebugPlan,
        instance: BugInstance,
        analysis: CodeAnalysis,
        client: LlmClient,
        writer: Optional[TranscriptWriter],
        iteration: int,
    ) -> tuple[AgentReport, ...]:
        """Run specialists sequentially in priority order; each sees its
        predecessors' reports. A transport failure truncates the round."""
        reports: list[AgentReport] = []
        current_best = instance.buggy_code
        for profile in plan.ordered_profiles():
            context = AgentContext(
                description=instance.description,
                language=instance.language,
                analysis=analysis,
                predecessor_reports=tuple(reports),
                current_best_code=current_best,
                forbidden=self._forbidden(instance),
            )
            try:
                report = execute_task(profile, context, client, self.catalog)
            except LlmError as exc:
                logger.warning(
                    "%s: agent %s failed at transport level, truncating round: %s",
                    instance.id,
                    profile.role_name,
                    exc,
                )
                break
            reports.append(report)
            if writer is not None:
                writer.write("agent_report", iteration=iteration, report=report.to_dict())
            if report.claimed_status in (ClaimedStatus.RESOLVED, ClaimedStatus.PARTIAL):
                if report.candidate_code:
                    current_best = report.candidate_code
        return tuple(reports)

    def _finish(
        self,
        instance: BugInstance,
        history: tuple[IterationRecord, ...],
        client: LlmClient,
        writer: Optional[TranscriptWriter],
        started: float,
        reason: Optional[str] = None,
    ) -> SessionOutcome:
        fixed = bool(history) and history[-1].verdict.status is VerdictStatus.FIXED
        outcome = SessionOutcome(
            instance_id=instance.id,
            fixed=fixed,
            iterations=history,
            agents_created_total=sum(len(it.plan.profiles) for it in history),
            llm_calls=client.calls,
            wall_time_ms=int((time.monotonic() - started) * 1000),
        )
        if writer is not None:
            payload = {
                "fixed": outcome.fixed,
                "iterations": len(outcome.iterations),
                "agents_created_total": outcome.agents_created_total,
                "llm_calls": outcome.llm_calls,
                "wall_time_ms": outcome.wall_time_ms,
            }
            if reason:
                payload["reason"] = reason
            writer.write("session_end", **payload)
        return outcome

    @staticmethod
    def _forbidden(instance: BugInstance) -> tuple[str, ...]:
        if instance.reference_solution:
            return (instance.reference_solution,)
        return ()


def select_candidate(reports: Sequence[AgentReport]) -> Optional[str]:
    """Highest-priority resolved candidate, else the last candidate seen.

    Reports arrive in priority order, so "highest priority" is simply the
    first resolved report that carries code.
    """
    for report in reports:
        if report.claimed_status is ClaimedStatus.RESOLVED and report.candidate_code:
            return report.candidate_code
    for report in reversed(list(reports)):
        if report.candidate_code:
            return report.candidate_code
    return None
