"""Command line: debug one file, run benchmarks and baselines, render reports,
replay recorded sessions, convert upstream datasets.

Exit codes: 0 success; 1 the debug verdict was not-fixed; 2 usage error;
3 environment error (missing API key, missing executor, unreadable inputs).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import shlex
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import bench as bench_mod
from .dataset import DatasetError, DatasetFilter, convert_upstream_file, load_dataset
from .llm import (
    BackendKind,
    LlmError,
    ModelConfig,
    ReplayMismatch,
    ScriptedBackend,
    replay_backend,
)
from .orchestrator import Orchestrator, OrchestratorConfig, ValidationMode
from .prompts import PromptError
from .sandbox import ReplayExecutor, SandboxUnavailable, SubprocessExecutor, replay_executor
from .transcript import TranscriptError, read_events
from .types import (
    BugCategory,
    BugInstance,
    ComplexityLevel,
    InvariantError,
    ResourceLimits,
    TestCase,
)

EXIT_OK = 0
EXIT_NOT_FIXED = 1
EXIT_USAGE = 2
EXIT_ENV = 3

EXECUTOR_ENV = "EXECUTOR_CMD"

def _add_model_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--model", default="", help="model name sent to the HTTP backend")
    parser.add_argument("--endpoint", default="", help="chat-completions endpoint URL")
    parser.add_argument("--temperature", type=float, default=0.2)
    parser.add_argument("--max-tokens", type=int, default=4096)
    parser.add_argument(
        "--api-key-env",
        default="LLM_API_KEY",
        help="environment variable holding the bearer token",
    )


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--max-iterations", type=int, default=3)
    parser.add_argument("--max-agents", type=int, default=5)
    parser.add_argument(
        "--validation",
        choices=["auto", "test_gated", "llm_judged"],
        default="auto",
        help="auto: test-gated when the instance has tests, else llm-judged",
    )
    parser.add_argument(
        "--executor-cmd",
        default="",
        help=f"test runner command line (default: ${EXECUTOR_ENV})",
    )
    parser.add_argument("--time-limit-ms", type=int, default=5000)
    parser.add_argument("--memory-limit-mb", type=int, default=256)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fixcrew",
        description="Adaptive multi-agent debugging and its benchmark harness.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_debug = sub.add_parser("debug", help="debug one source file")
    p_debug.add_argument("--code", required=True, help="path to the buggy source file")
    p_debug.add_argument("--tests", default="", help="JSON file with test cases")
    p_debug.add_argument("--description", default="", help="problem statement")
    p_debug.add_argument(
        "--category",
        choices=[c.value for c in BugCategory],
        default="logic",
        help="suspected bug category for ad-hoc input",
    )
    p_debug.add_argument("--language", default="python")
    p_debug.add_argument(
        "--transcript", default="fixcrew_transcript.jsonl", help="transcript output path"
    )
    p_debug.add_argument(
        "--scripted-script",
        default="",
        help="JSON array of canned responses; selects the scripted backend",
    )
    _add_run_flags(p_debug)
    _add_model_flags(p_debug)

    p_bench = sub.add_parser("bench", help="run adaptive sessions over a dataset")
    p_bench.add_argument("--dataset", required=True)
    p_bench.add_argument("--limit", type=int, default=None)
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--categories", default="", help="comma-separated category filter")
    p_bench.add_argument("--complexities", default="", help="comma-separated complexity filter")
    p_bench.add_argument("--concurrency", type=int, default=1)
    p_bench.add_argument("--out", default="bench_out")
    p_bench.add_argument("--baseline", action="store_true", help="also run the one-shot baseline")
    p_bench.add_argument(
        "--scripted-dir",
        default="",
        help="directory of <instance_id>.json response scripts (scripted backend)",
    )
    p_bench.add_argument(
        "--baseline-scripted-dir",
        default="",
        help="response scripts for the baseline run (defaults to --scripted-dir)",
    )
    p_bench.add_argument(
        "--replay-transcripts",
        default="",
        help="transcripts directory of a recorded run to replay",
    )
    p_bench.add_argument("--format", choices=["json", "csv", "markdown"], default="json")
    _add_run_flags(p_bench)
    _add_model_flags(p_bench)

    p_base = sub.add_parser("baseline", help="run the one-shot baseline over a dataset")
    p_base.add_argument("--dataset", required=True)
    p_base.add_argument("--limit", type=int, default=None)
    p_base.add_argument("--seed", type=int, default=0)
    p_base.add_argument("--categories", default="")
    p_base.add_argument("--complexities", default="")
    p_base.add_argument("--out", default="bench_out")
    p_base.add_argument("--scripted-dir", default="")
    _add_run_flags(p_base)
    _add_model_flags(p_base)

    p_report = sub.add_parser("report", help="render metrics from saved outcomes")
    p_report.add_argument(
        "--outcomes", action="append", required=True, help="outcomes.jsonl (repeatable, one per run)"
    )
    p_report.add_argument(
        "--baseline-outcomes", action="append", default=[], help="baseline_outcomes.jsonl per run"
    )
    p_report.add_argument("--label", action="append", default=[], help="label per run")
    p_report.add_argument("--meta", default="", help="instance_meta.json for complexity buckets")
    p_report.add_argument("--format", choices=["json", "csv", "markdown"], default="json")
    p_report.add_argument("--out", default="report_out")

    p_replay = sub.add_parser("replay", help="re-execute a recorded session deterministically")
    p_replay.add_argument("--transcript", required=True)
    p_replay.add_argument("--out", default="", help="optional path for the replayed transcript")

    p_convert = sub.add_parser("convert", help="convert an upstream benchmark release to the canonical format")
    p_convert.add_argument("--input", required=True)
    p_convert.add_argument("--out", required=True)

    return parser


# ----- shared wiring -----------------------------------------------------------


def _model_config(args: argparse.Namespace, scripted: bool) -> ModelConfig:
    if scripted:
        return ModelConfig(
            backend_kind=BackendKind.SCRIPTED,
            temperature=args.temperature,
            max_tokens=args.max_tokens,
        )
    return ModelConfig(
        backend_kind=BackendKind.HTTP_CHAT,
        endpoint_url=args.endpoint,
        model_name=args.model,
        temperature=args.temperature,
        max_tokens=args.max_tokens,
        api_key_env=args.api_key_env,
    )


def _validation_mode(args: argparse.Namespace) -> Optional[ValidationMode]:
    return None if args.validation == "auto" else ValidationMode(args.validation)


def _executor_command(args: argparse.Namespace) -> list[str]:
    raw = args.executor_cmd or os.environ.get(EXECUTOR_ENV, "")
    return shlex.split(raw) if raw.strip() else []


def _limits(args: argparse.Namespace) -> ResourceLimits:
    return ResourceLimits(
        time_limit_ms=args.time_limit_ms, memory_limit_mb=args.memory_limit_mb
    )


def _require_api_key(args: argparse.Namespace) -> Optional[str]:
    """Returns an error message when the HTTP backend cannot authenticate."""
    if not args.endpoint:
        return (
            "no backend selected: pass --endpoint for a live model or a "
            "--scripted-script/--scripted-dir/--replay option"
        )
    if not os.environ.get(args.api_key_env):
        return f"missing API key: environment variable {args.api_key_env} is not set"
    return None


def _load_filtered_dataset(args: argparse.Namespace) -> list[BugInstance]:
    categories = (
        frozenset(BugCategory.parse(c.strip()) for c in args.categories.split(",") if c.strip())
        or None
    )
    complexities = (
        frozenset(
            ComplexityLevel.parse(c.strip()) for c in args.complexities.split(",") if c.strip()
        )
        or None
    )
    return load_dataset(
        args.dataset,
        DatasetFilter(
            categories=categories,
            complexities=complexities,
            limit=args.limit,
            seed=args.seed,
        ),
    )


def _scripted_dir_factory(directory: str):
    root = Path(directory)

    def factory(instance: BugInstance) -> ScriptedBackend:
        path = root / f"{bench_mod.safe_filename(instance.id)}.json"
        if not path.exists():
            return ScriptedBackend([])
        return ScriptedBackend(json.loads(path.read_text(encoding="utf-8")))

    return factory


def _replay_factories(transcripts_dir: str):
    root = Path(transcripts_dir)

    def backend_factory(instance: BugInstance):
        return replay_backend(str(root / f"{bench_mod.safe_filename(instance.id)}.jsonl"))

    def executor_factory(instance: BugInstance):
        return replay_executor(str(root / f"{bench_mod.safe_filename(instance.id)}.jsonl"))

    return backend_factory, executor_factory


# ----- subcommand handlers -------------------------------------------------------


def _cmd_debug(args: argparse.Namespace) -> int:
    code_path = Path(args.code)
    if not code_path.is_file():
        print(f"error: code file not found: {code_path}", file=sys.stderr)
        return EXIT_ENV
    tests: list[TestCase] = []
    if args.tests:
        tests_path = Path(args.tests)
        if not tests_path.is_file():
            print(f"error: tests file not found: {tests_path}", file=sys.stderr)
            return EXIT_ENV
        tests = [
            TestCase.from_dict(entry)
            for entry in json.loads(tests_path.read_text(encoding="utf-8"))
        ]

    scripted = bool(args.scripted_script)
    if scripted:
        responses = json.loads(Path(args.scripted_script).read_text(encoding="utf-8"))
        backend = ScriptedBackend(responses)
    else:
        problem = _require_api_key(args)
        if problem:
            print(f"error: {problem}", file=sys.stderr)
            return EXIT_ENV
        from .llm import HttpChatBackend

        backend = HttpChatBackend()

    instance = BugInstance(
        id=f"adhoc-{code_path.stem}",
        title=code_path.name,
        description=args.description or "Fix the bug in the provided program.",
        buggy_code=code_path.read_text(encoding="utf-8"),
        language=args.language,
        category=BugCategory.parse(args.category),
        complexity=ComplexityLevel.UNKNOWN,
        tests=tuple(tests),
    )

    config = OrchestratorConfig(
        max_iterations=args.max_iterations,
        max_agents=args.max_agents,
        validation_mode=_validation_mode(args),
        model=_model_config(args, scripted),
    )
    command = _executor_command(args)
    executor = SubprocessExecutor(command) if command else None
    mode = config.resolve_mode(instance)
    if mode is ValidationMode.TEST_GATED and executor is None:
        print(
            f"error: test-gated validation needs a test runner; set ${EXECUTOR_ENV} "
            "or pass --executor-cmd",
            file=sys.stderr,
        )
        return EXIT_ENV

    transcript = Path(args.transcript)
    transcript.unlink(missing_ok=True)  # a transcript records exactly one session
    orchestrator = Orchestrator(config, executor=executor, limits=_limits(args))
    outcome = orchestrator.run_session(instance, backend, str(transcript))

    last = outcome.iterations[-1].verdict if outcome.iterations else None
    print(f"verdict: {'fixed' if outcome.fixed else 'not_fixed'}")
    if last is not None:
        print(f"rationale: {last.rationale}")
    print(
        f"iterations: {len(outcome.iterations)}  agents: {outcome.agents_created_total}  "
        f"llm_calls: {outcome.llm_calls}"
    )
    print(f"transcript: {transcript}")
    if outcome.fixed and last is not None and last.final_code:
        print("--- fixed code ---")
        print(last.final_code)
    return EXIT_OK if outcome.fixed else EXIT_NOT_FIXED


def _wire_bench_backends(args: argparse.Namespace):
    """Resolve (backend_factory, executor_factory, scripted) for bench/baseline."""
    command = _executor_command(args)
    subprocess_executor = SubprocessExecutor(command) if command else None

    if getattr(args, "replay_transcripts", ""):
        return (*_replay_factories(args.replay_transcripts), True)
    if args.scripted_dir:
        return (
            _scripted_dir_factory(args.scripted_dir),
            lambda _inst: subprocess_executor,
            True,
        )
    problem = _require_api_key(args)
    if problem:
        raise EnvironmentError(problem)
    from .llm import HttpChatBackend

    shared = HttpChatBackend()
    return (lambda _inst: shared, lambda _inst: subprocess_executor, False)


def _cmd_bench(args: argparse.Namespace) -> int:
    instances = _load_filtered_dataset(args)
    if not instances:
        print("error: dataset selection is empty", file=sys.stderr)
        return EXIT_ENV
    try:
        backend_factory, executor_factory, scripted = _wire_bench_backends(args)
    except EnvironmentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ENV

    config = OrchestratorConfig(
        max_iterations=args.max_iterations,
        max_agents=args.max_agents,
        validation_mode=_validation_mode(args),
        model=_model_config(args, scripted),
    )
    outcomes = bench_mod.run_benchmark(
        instances,
        config,
        concurrency=args.concurrency,
        out_dir=args.out,
        backend_factory=backend_factory,
        executor_factory=executor_factory,
        limits=_limits(args),
    )

    baseline = None
    if args.baseline:
        baseline_dir = args.baseline_scripted_dir or args.scripted_dir
        baseline_factory = (
            _scripted_dir_factory(baseline_dir) if baseline_dir else backend_factory
        )
        baseline = bench_mod.run_baseline(
            instances,
            config,
            backend_factory=baseline_factory,
            executor_factory=executor_factory,
            limits=_limits(args),
            out_dir=args.out,
        )

    summary = bench_mod.compute_metrics(
        outcomes, baseline, {inst.id: inst.complexity for inst in instances}
    )
    bench_mod.emit_report(summary, outcomes, args.out, args.format)
    print(
        f"done: {summary.fixed_adaptive}/{summary.total} fixed"
        + (f", baseline {summary.fixed_baseline}/{summary.total}" if baseline else "")
        + (f", gain {summary.gain_points:g} points" if summary.gain_points is not None else "")
    )
    print(f"outputs in {args.out}")
    return EXIT_OK


def _cmd_baseline(args: argparse.Namespace) -> int:
    instances = _load_filtered_dataset(args)
    if not instances:
        print("error: dataset selection is empty", file=sys.stderr)
        return EXIT_ENV
    args.replay_transcripts = ""
    try:
        backend_factory, executor_factory, scripted = _wire_bench_backends(args)
    except EnvironmentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ENV
    config = OrchestratorConfig(
        max_iterations=args.max_iterations,
        max_agents=args.max_agents,
        validation_mode=_validation_mode(args),
        model=_model_config(args, scripted),
    )
    baseline = bench_mod.run_baseline(
        instances,
        config,
        backend_factory=backend_factory,
        executor_factory=executor_factory,
        limits=_limits(args),
        out_dir=args.out,
    )
    fixed = sum(1 for b in baseline if b.fixed)
    print(f"baseline: {fixed}/{len(baseline)} fixed, outputs in {args.out}")
    return EXIT_OK


def _cmd_report(args: argparse.Namespace) -> int:
    from .bench import (
        BaselineOutcome,
        comparison_table,
        compute_metrics,
        emit_report,
        load_complexity_map,
        mean_gain,
        summary_row,
    )
    from .types import SessionOutcome

    if args.baseline_outcomes and len(args.baseline_outcomes) != len(args.outcomes):
        print("error: --baseline-outcomes must be given once per --outcomes", file=sys.stderr)
        return EXIT_USAGE

    rows = []
    first_summary = None
    first_outcomes = None
    for i, outcomes_path in enumerate(args.outcomes):
        path = Path(outcomes_path)
        if not path.is_file():
            print(f"error: outcomes file not found: {path}", file=sys.stderr)
            return EXIT_ENV
        outcomes = [
            SessionOutcome.from_dict(json.loads(line))
            for line in path.read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]
        baseline = None
        if args.baseline_outcomes:
            bpath = Path(args.baseline_outcomes[i])
            if not bpath.is_file():
                print(f"error: baseline outcomes file not found: {bpath}", file=sys.stderr)
                return EXIT_ENV
            baseline = [
                BaselineOutcome.from_dict(json.loads(line))
                for line in bpath.read_text(encoding="utf-8").splitlines()
                if line.strip()
            ]
        complexity_map = load_complexity_map(args.meta and Path(args.meta).parent or path.parent)
        summary = compute_metrics(outcomes, baseline, complexity_map)
        label = args.label[i] if i < len(args.label) else f"run{i + 1}"
        rows.append(summary_row(label, summary))
        if first_summary is None:
            first_summary, first_outcomes = summary, outcomes

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    assert first_summary is not None and first_outcomes is not None
    emit_report(first_summary, first_outcomes, out_dir, args.format, label=rows[0]["label"])
    if args.format in ("csv", "markdown"):
        table = comparison_table(rows, args.format)
        ext = "csv" if args.format == "csv" else "md"
        (out_dir / f"report.{ext}").write_text(table, encoding="utf-8")
        print(table, end="")
    else:
        (out_dir / "report.json").write_text(
            json.dumps(rows, indent=2) + "\n", encoding="utf-8"
        )
        for row in rows:
            print(json.dumps(row))
    gain = mean_gain(rows)
    if gain is not None:
        print(f"Mean gain: {gain:g} percentage points")
    print(f"outputs in {out_dir}")
    return EXIT_OK


def _cmd_replay(args: argparse.Namespace) -> int:
    events = read_events(args.transcript)
    starts = [e for e in events if e.get("kind") == "session_start"]
    if not starts:
        print("error: transcript has no session_start event", file=sys.stderr)
        return EXIT_ENV
    start = starts[0]
    instance = BugInstance.from_dict(start["instance"])
    recorded = start.get("config", {})
    mode = ValidationMode(recorded.get("validation_mode", "llm_judged"))
    model_meta = recorded.get("model", {})
    config = OrchestratorConfig(
        max_iterations=int(recorded.get("max_iterations", 3)),
        max_agents=int(recorded.get("max_agents", 5)),
        validation_mode=mode,
        model=ModelConfig(
            backend_kind=BackendKind.SCRIPTED,
            temperature=float(model_meta.get("temperature", 0.2)),
            max_tokens=int(model_meta.get("max_tokens", 4096)),
        ),
    )
    executor = None
    if mode is ValidationMode.TEST_GATED:
        executor = ReplayExecutor([e for e in events if e.get("kind") == "execution"])
    backend = replay_backend(args.transcript)
    orchestrator = Orchestrator(config, executor=executor)
    out_path = args.out or None
    if out_path:
        Path(out_path).unlink(missing_ok=True)
    outcome = orchestrator.run_session(instance, backend, out_path)
    print(json.dumps(outcome.to_dict(), indent=2))

    # Fidelity check: the replayed outcome must agree with what the recording
    # says happened; anything else means the transcript is corrupt or stale.
    ends = [e for e in events if e.get("kind") == "session_end"]
    if ends:
        recorded_end = ends[0]
        for field in ("fixed", "iterations", "agents_created_total", "llm_calls"):
            replayed_value = (
                len(outcome.iterations) if field == "iterations" else getattr(outcome, field)
            )
            if recorded_end.get(field) != replayed_value:
                print(
                    f"error: replay diverged from the recording: {field} was "
                    f"{recorded_end.get(field)}, replay produced {replayed_value}",
                    file=sys.stderr,
                )
                return EXIT_ENV
    return EXIT_OK


def _cmd_convert(args: argparse.Namespace) -> int:
    src = Path(args.input)
    if not src.is_file():
        print(f"error: input file not found: {src}", file=sys.stderr)
        return EXIT_ENV
    converted, skipped = convert_upstream_file(src, args.out)
    print(f"converted {converted} records, skipped {skipped}")
    return EXIT_OK


_HANDLERS = {
    "debug": _cmd_debug,
    "bench": _cmd_bench,
    "baseline": _cmd_baseline,
    "report": _cmd_report,
    "replay": _cmd_replay,
    "convert": _cmd_convert,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=os.environ.get("FIXCREW_LOG", "WARNING"))
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _HANDLERS[args.command](args)
    except ReplayMismatch as exc:
        print(f"error: replay mismatch: {exc}", file=sys.stderr)
        return EXIT_ENV
    except (SandboxUnavailable, DatasetError, TranscriptError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ENV
    except (InvariantError, PromptError, LlmError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except KeyboardInterrupt:
        print("interrupted; partial outcomes are on disk", file=sys.stderr)
        return 130


if __name__ == "__main__":
    sys.exit(main())
