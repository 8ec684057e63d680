"""Benchmark harness: adaptive sessions vs. a one-shot baseline.

Runs every instance of a dataset through the orchestrator (optionally
concurrently; sessions share nothing but the backend factory), persists
outcomes incrementally so interrupted runs resume without re-executing
finished instances, and computes fix-rate/gain metrics plus the agent-count
and iteration-count distributions by complexity.
"""

from __future__ import annotations

import json
import logging
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

from .llm import Backend, LlmClient, LlmError, user
from .orchestrator import Orchestrator, OrchestratorConfig
from .prompts import DEFAULT_TEMPLATE_DIR, PromptCatalog, load_catalog
from .sandbox import Executor, evaluate_candidate, sha256_text
from .transcript import TranscriptWriter
from .types import (
    BugInstance,
    ComplexityLevel,
    ExecutionStatus,
    ResourceLimits,
    SessionOutcome,
)

logger = logging.getLogger(__name__)

_CODE_FENCE_RE = re.compile(r"```[^\n`]*\n(.*?)```", re.DOTALL)


class IdMismatch(ValueError):
    """Adaptive and baseline outcome sets cover different instance ids."""


def extract_code_block(text: str) -> str:
    """First fenced code block, or the whole reply when none is fenced."""
    match = _CODE_FENCE_RE.search(text)
    return match.group(1) if match else text


def safe_filename(instance_id: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]", "_", instance_id)


@dataclass(frozen=True)
class BaselineOutcome:
    instance_id: str
    fixed: bool
    llm_calls: int

    def to_dict(self) -> dict:
        return {"instance_id": self.instance_id, "fixed": self.fixed, "llm_calls": self.llm_calls}

    @classmethod
    def from_dict(cls, d: Mapping) -> "BaselineOutcome":
        return cls(
            instance_id=str(d["instance_id"]),
            fixed=bool(d["fixed"]),
            llm_calls=int(d["llm_calls"]),
        )


# ----- running ----------------------------------------------------------------


def _read_jsonl(path: Path) -> list[dict]:
    rows = []
    if path.exists():
        with path.open("r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    rows.append(json.loads(line))
    return rows


def _write_meta(out_dir: Path, instances: Sequence[BugInstance]) -> None:
    meta_path = out_dir / "instance_meta.json"
    meta: dict[str, dict] = {}
    if meta_path.exists():
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
    for inst in instances:
        meta[inst.id] = {
            "title": inst.title,
            "category": inst.category.value,
            "complexity": inst.complexity.value,
        }
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True), encoding="utf-8")


def load_complexity_map(out_dir: str | Path) -> dict[str, ComplexityLevel]:
    meta_path = Path(out_dir) / "instance_meta.json"
    if not meta_path.exists():
        return {}
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    return {
        iid: ComplexityLevel(entry.get("complexity", "unknown"))
        for iid, entry in meta.items()
    }


def run_benchmark(
    instances: Sequence[BugInstance],
    config: OrchestratorConfig,
    concurrency: int = 1,
    *,
    out_dir: str | Path,
    backend_factory: Callable[[BugInstance], Backend],
    executor_factory: Callable[[BugInstance], Optional[Executor]] = lambda _: None,
    limits: ResourceLimits = ResourceLimits(),
    catalog: Optional[PromptCatalog] = None,
) -> list[SessionOutcome]:
    """One adaptive session per instance; failures never abort the run.

    Already-completed instance ids found in ``out_dir/outcomes.jsonl`` are
    skipped, which makes an interrupted run restartable.
    """
    if not instances:
        raise ValueError("run_benchmark requires a nonempty dataset")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "transcripts").mkdir(exist_ok=True)
    _write_meta(out_dir, instances)
    catalog = catalog if catalog is not None else load_catalog(DEFAULT_TEMPLATE_DIR)

    outcomes_path = out_dir / "outcomes.jsonl"
    done: dict[str, SessionOutcome] = {}
    for row in _read_jsonl(outcomes_path):
        outcome = SessionOutcome.from_dict(row)
        done[outcome.instance_id] = outcome

    todo = [inst for inst in instances if inst.id not in done]

    def run_one(instance: BugInstance) -> SessionOutcome:
        started = time.monotonic()
        transcript_path = out_dir / "transcripts" / f"{safe_filename(instance.id)}.jsonl"
        # The instance is not in outcomes.jsonl, so any existing transcript is
        # a torso from an interrupted session; the rerun starts clean.
        transcript_path.unlink(missing_ok=True)
        try:
            orchestrator = Orchestrator(
                config,
                catalog=catalog,
                executor=executor_factory(instance),
                limits=limits,
            )
            return orchestrator.run_session(
                instance, backend_factory(instance), str(transcript_path)
            )
        except Exception as exc:  # per-instance isolation: record, never abort
            logger.error("session for %s failed: %s", instance.id, exc)
            return SessionOutcome(
                instance_id=instance.id,
                fixed=False,
                iterations=(),
                agents_created_total=0,
                llm_calls=0,
                wall_time_ms=int((time.monotonic() - started) * 1000),
            )

    if todo:
        with outcomes_path.open("a", encoding="utf-8") as sink:
            with ThreadPoolExecutor(max_workers=max(1, concurrency)) as pool:
                futures = [(inst, pool.submit(run_one, inst)) for inst in todo]
                for instance, future in futures:
                    outcome = future.result()
                    done[instance.id] = outcome
                    sink.write(json.dumps(outcome.to_dict(), ensure_ascii=False) + "\n")
                    sink.flush()

    return [done[inst.id] for inst in instances]


def run_baseline(
    instances: Sequence[BugInstance],
    config: OrchestratorConfig,
    *,
    backend_factory: Callable[[BugInstance], Backend],
    executor_factory: Callable[[BugInstance], Optional[Executor]] = lambda _: None,
    limits: ResourceLimits = ResourceLimits(),
    catalog: Optional[PromptCatalog] = None,
    out_dir: Optional[str | Path] = None,
) -> list[BaselineOutcome]:
    """One unscaffolded completion per instance, judged by the same sandbox
    path as adaptive sessions."""
    if not instances:
        raise ValueError("run_baseline requires a nonempty dataset")
    catalog = catalog if catalog is not None else load_catalog(DEFAULT_TEMPLATE_DIR)

    sink = None
    done: dict[str, BaselineOutcome] = {}
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "baseline_transcripts").mkdir(exist_ok=True)
        _write_meta(out_dir, instances)
        baseline_path = out_dir / "baseline_outcomes.jsonl"
        for row in _read_jsonl(baseline_path):
            outcome = BaselineOutcome.from_dict(row)
            done[outcome.instance_id] = outcome
        sink = baseline_path.open("a", encoding="utf-8")

    try:
        for instance in instances:
            if instance.id in done:
                continue
            outcome = _baseline_one(
                instance, config, backend_factory, executor_factory, limits, catalog, out_dir
            )
            done[instance.id] = outcome
            if sink is not None:
                sink.write(json.dumps(outcome.to_dict(), ensure_ascii=False) + "\n")
                sink.flush()
    finally:
        if sink is not None:
            sink.close()
    return [done[inst.id] for inst in instances]


def _baseline_one(
    instance: BugInstance,
    config: OrchestratorConfig,
    backend_factory: Callable[[BugInstance], Backend],
    executor_factory: Callable[[BugInstance], Optional[Executor]],
    limits: ResourceLimits,
    catalog: PromptCatalog,
    out_dir: Optional[Path],
) -> BaselineOutcome:
    writer = None
    if out_dir is not None:
        writer = TranscriptWriter(
            out_dir / "baseline_transcripts" / f"{safe_filename(instance.id)}.jsonl"
        )
    client = LlmClient(config.model, backend_factory(instance), writer)
    try:
        forbidden = (instance.reference_solution,) if instance.reference_solution else ()
        prompt = catalog.render(
            "one_shot_baseline_v1",
            {
                "description": instance.description,
                "language": instance.language,
                "buggy_code": instance.buggy_code,
            },
            forbidden=forbidden,
        )
        try:
            reply = client.complete([user(prompt)]).content
        except LlmError as exc:
            logger.warning("baseline completion failed for %s: %s", instance.id, exc)
            return BaselineOutcome(instance.id, False, client.calls)

        candidate = extract_code_block(reply)
        fixed = False
        executor = executor_factory(instance)
        if candidate.strip() and instance.tests and executor is not None:
            report = evaluate_candidate(candidate, instance.tests, limits, executor)
            if writer is not None:
                writer.write(
                    "execution",
                    candidate_sha256=sha256_text(candidate),
                    report=report.to_dict(),
                )
            fixed = report.status is ExecutionStatus.ALL_PASSED
        return BaselineOutcome(instance.id, fixed, client.calls)
    finally:
        if writer is not None:
            writer.close()


# ----- metrics ----------------------------------------------------------------


@dataclass(frozen=True)
class MetricsSummary:
    total: int
    fixed_adaptive: int
    fixed_baseline: Optional[int]
    fix_rate_adaptive: float
    fix_rate_baseline: Optional[float]
    gain_points: Optional[float]
    agents_histogram_by_complexity: dict
    iterations_histogram_by_complexity: dict
    mean_llm_calls: float

    def to_dict(self) -> dict:
        def hist(h: Mapping) -> dict:
            return {
                level.value: {str(k): v for k, v in sorted(buckets.items())}
                for level, buckets in sorted(h.items(), key=lambda kv: kv[0].value)
            }

        return {
            "total": self.total,
            "fixed_adaptive": self.fixed_adaptive,
            "fixed_baseline": self.fixed_baseline,
            "fix_rate_adaptive": self.fix_rate_adaptive,
            "fix_rate_baseline": self.fix_rate_baseline,
            "gain_points": self.gain_points,
            "agents_histogram_by_complexity": hist(self.agents_histogram_by_complexity),
            "iterations_histogram_by_complexity": hist(self.iterations_histogram_by_complexity),
            "mean_llm_calls": self.mean_llm_calls,
        }


def compute_metrics(
    adaptive_outcomes: Sequence[SessionOutcome],
    baseline_outcomes: Optional[Sequence[BaselineOutcome]] = None,
    complexity_by_id: Optional[Mapping[str, ComplexityLevel]] = None,
) -> MetricsSummary:
    """Pure aggregation; gain is in percentage points, integer-first so the
    canonical counts reproduce exactly."""
    if not adaptive_outcomes:
        raise ValueError("compute_metrics requires at least one outcome")
    total = len(adaptive_outcomes)
    fixed_adaptive = sum(1 for o in adaptive_outcomes if o.fixed)

    fixed_baseline = None
    fix_rate_baseline = None
    gain_points = None
    if baseline_outcomes is not None:
        adaptive_ids = {o.instance_id for o in adaptive_outcomes}
        baseline_ids = {o.instance_id for o in baseline_outcomes}
        if adaptive_ids != baseline_ids:
            missing = sorted(adaptive_ids ^ baseline_ids)[:5]
            raise IdMismatch(f"adaptive/baseline instance sets differ, e.g. {missing}")
        fixed_baseline = sum(1 for o in baseline_outcomes if o.fixed)
        fix_rate_baseline = fixed_baseline / total
        gain_points = (fixed_adaptive - fixed_baseline) * 100.0 / total

    complexity_by_id = complexity_by_id or {}
    agents_hist: dict[ComplexityLevel, dict[int, int]] = {}
    iters_hist: dict[ComplexityLevel, dict[int, int]] = {}
    for outcome in adaptive_outcomes:
        level = complexity_by_id.get(outcome.instance_id, ComplexityLevel.UNKNOWN)
        agents_hist.setdefault(level, {})
        iters_hist.setdefault(level, {})
        a = outcome.agents_created_total
        i = len(outcome.iterations)
        agents_hist[level][a] = agents_hist[level].get(a, 0) + 1
        iters_hist[level][i] = iters_hist[level].get(i, 0) + 1

    return MetricsSummary(
        total=total,
        fixed_adaptive=fixed_adaptive,
        fixed_baseline=fixed_baseline,
        fix_rate_adaptive=fixed_adaptive / total,
        fix_rate_baseline=fix_rate_baseline,
        gain_points=gain_points,
        agents_histogram_by_complexity=agents_hist,
        iterations_histogram_by_complexity=iters_hist,
        mean_llm_calls=sum(o.llm_calls for o in adaptive_outcomes) / total,
    )


# ----- report emission ----------------------------------------------------------

_COMPLEXITY_ORDER = [
    ComplexityLevel.LOW,
    ComplexityLevel.MEDIUM,
    ComplexityLevel.HIGH,
    ComplexityLevel.UNKNOWN,
]


def _histogram_csv(histogram: Mapping) -> str:
    lines = ["complexity,value,instance_count"]
    for level in _COMPLEXITY_ORDER:
        buckets = histogram.get(level)
        if not buckets:
            continue
        for value, count in sorted(buckets.items()):
            lines.append(f"{level.value},{value},{count}")
    return "\n".join(lines) + "\n"


def _pct(fixed: int, total: int) -> float:
    return fixed * 100.0 / total


def summary_row(label: str, summary: MetricsSummary) -> dict:
    row = {
        "label": label,
        "total": summary.total,
        "baseline_fixed": summary.fixed_baseline,
        "adaptive_fixed": summary.fixed_adaptive,
        "baseline_pct": (
            _pct(summary.fixed_baseline, summary.total)
            if summary.fixed_baseline is not None
            else None
        ),
        "adaptive_pct": _pct(summary.fixed_adaptive, summary.total),
        "gain_points": summary.gain_points,
        "mean_llm_calls": summary.mean_llm_calls,
    }
    return row


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:g}"
    return str(value)


_ROW_FIELDS = [
    "label",
    "total",
    "baseline_fixed",
    "adaptive_fixed",
    "baseline_pct",
    "adaptive_pct",
    "gain_points",
    "mean_llm_calls",
]


def comparison_table(rows: Sequence[dict], fmt: str) -> str:
    """Render run-summary rows as csv or a markdown table with equal values."""
    if fmt == "csv":
        lines = [",".join(_ROW_FIELDS)]
        lines += [",".join(_fmt(row[f]) for f in _ROW_FIELDS) for row in rows]
        return "\n".join(lines) + "\n"
    if fmt == "markdown":
        header = "| " + " | ".join(_ROW_FIELDS) + " |"
        sep = "|" + "|".join(" --- " for _ in _ROW_FIELDS) + "|"
        body = ["| " + " | ".join(_fmt(row[f]) for f in _ROW_FIELDS) + " |" for row in rows]
        return "\n".join([header, sep] + body) + "\n"
    raise ValueError(f"unknown table format: {fmt}")


def mean_gain(rows: Sequence[dict]) -> Optional[float]:
    gains = [row["gain_points"] for row in rows if row.get("gain_points") is not None]
    if not gains:
        return None
    return sum(gains) / len(gains)


def emit_report(
    summary: MetricsSummary,
    outcomes: Sequence[SessionOutcome],
    out_dir: str | Path,
    fmt: str = "json",
    label: str = "run",
) -> list[Path]:
    """Write summary.json, the format-specific table, and the two plot-ready
    distribution series. Refuses to render an empty outcome list."""
    if not outcomes:
        raise ValueError("refusing to render a report over zero outcomes")
    if fmt not in ("json", "csv", "markdown"):
        raise ValueError(f"unknown report format: {fmt}")
    out_dir = Path(out_dir)
    figures = out_dir / "figures"
    figures.mkdir(parents=True, exist_ok=True)

    written: list[Path] = []
    summary_json = out_dir / "summary.json"
    summary_json.write_text(
        json.dumps(summary.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    written.append(summary_json)

    if fmt in ("csv", "markdown"):
        table = comparison_table([summary_row(label, summary)], fmt)
        ext = "csv" if fmt == "csv" else "md"
        table_path = out_dir / f"summary.{ext}"
        table_path.write_text(table, encoding="utf-8")
        written.append(table_path)

    agents_csv = figures / "agents_by_complexity.csv"
    agents_csv.write_text(_histogram_csv(summary.agents_histogram_by_complexity), encoding="utf-8")
    written.append(agents_csv)
    iters_csv = figures / "iterations_by_complexity.csv"
    iters_csv.write_text(
        _histogram_csv(summary.iterations_histogram_by_complexity), encoding="utf-8"
    )
    written.append(iters_csv)
    return written
