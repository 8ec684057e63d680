"""Append-only JSONL session transcripts.

Schema (version 1): one JSON object per line with at least ``v`` (schema
version), ``kind`` and ``ts_ms`` (epoch milliseconds). Event kinds:

- ``session_start``   {instance, config}
- ``analysis``        {analysis}
- ``plan``            {iteration, plan, signature, truncated_from?, reasked?}
- ``agent_report``    {iteration, report}
- ``execution``       {iteration?, candidate_sha256, report}
- ``verdict``         {iteration, verdict}
- ``novelty_collision`` {iteration, signature}
- ``completion``      {request_hash, response}
- ``session_end``     {fixed, iterations, agents_created_total, llm_calls,
                       wall_time_ms, reason?}

``completion`` events double as the recording consumed by the replay backend;
``execution`` events likewise replay sandbox runs (see :mod:`fixcrew.llm` and
:mod:`fixcrew.sandbox`).
"""

from __future__ import annotations

import json
import threading
import time
from pathlib import Path
from typing import Any, Iterator, Optional

TRANSCRIPT_SCHEMA_VERSION = 1

EVENT_KINDS = frozenset(
    {
        "session_start",
        "analysis",
        "plan",
        "agent_report",
        "execution",
        "verdict",
        "novelty_collision",
        "completion",
        "session_end",
    }
)


class TranscriptError(RuntimeError):
    """A transcript file is malformed or contains unknown events."""


class TranscriptWriter:
    """Appends one event per line, flushing each write so a killed run keeps
    everything written so far."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = self.path.open("a", encoding="utf-8")
        self._lock = threading.Lock()

    def write(self, kind: str, **payload: Any) -> None:
        if kind not in EVENT_KINDS:
            raise TranscriptError(f"unknown transcript event kind: {kind}")
        event = {"v": TRANSCRIPT_SCHEMA_VERSION, "kind": kind, "ts_ms": int(time.time() * 1000)}
        event.update(payload)
        line = json.dumps(event, ensure_ascii=False)
        with self._lock:
            self._fh.write(line + "\n")
            self._fh.flush()

    def close(self) -> None:
        with self._lock:
            if not self._fh.closed:
                self._fh.close()

    def __enter__(self) -> "TranscriptWriter":
        return self

    def __exit__(self, *exc: Any) -> None:
        self.close()


def read_events(path: str | Path, kind: Optional[str] = None) -> list[dict[str, Any]]:
    """Parse a transcript, optionally filtered to one event kind."""
    events = list(iter_events(path))
    if kind is not None:
        events = [e for e in events if e.get("kind") == kind]
    return events


def iter_events(path: str | Path) -> Iterator[dict[str, Any]]:
    path = Path(path)
    if not path.exists():
        raise TranscriptError(f"transcript not found: {path}")
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                event = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TranscriptError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            if not isinstance(event, dict) or "kind" not in event:
                raise TranscriptError(f"{path}:{lineno}: not a transcript event")
            yield event
