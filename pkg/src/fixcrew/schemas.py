"""Registered output schemas for structured model replies.

Each schema is a parser from a decoded JSON value to a domain value; parsers
raise :class:`SchemaError` with a message suitable for a repair prompt. The
registry is closed: templates reference these ids in their front-matter and
the client refuses unknown ids.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Callable, Optional

from .types import BugCategory, ClaimedStatus, CodeAnalysis, VerdictStatus


class SchemaError(ValueError):
    """The model's JSON does not fit the requested schema."""


class JsonExtractError(ValueError):
    """No JSON object could be located in the model's reply."""


def extract_json_object(text: str) -> Any:
    """Decode the first balanced top-level ``{...}`` in ``text``.

    Models wrap JSON in prose and code fences unpredictably; fence markers are
    dropped before scanning. String literals and escapes are honoured when
    balancing braces.
    """
    cleaned = []
    for line in text.splitlines():
        stripped = line.strip()
        if stripped.startswith("```"):
            continue
        cleaned.append(line)
    body = "\n".join(cleaned)

    start = body.find("{")
    while start != -1:
        depth = 0
        in_string = False
        escaped = False
        for i in range(start, len(body)):
            ch = body[i]
            if in_string:
                if escaped:
                    escaped = False
                elif ch == "\\":
                    escaped = True
                elif ch == '"':
                    in_string = False
                continue
            if ch == '"':
                in_string = True
            elif ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    blob = body[start : i + 1]
                    try:
                        return json.loads(blob)
                    except json.JSONDecodeError:
                        break  # balanced but not JSON; try the next '{'
        start = body.find("{", start + 1)
    raise JsonExtractError("no parseable JSON object found in the reply")


def _need_dict(data: Any) -> dict[str, Any]:
    if not isinstance(data, dict):
        raise SchemaError(f"expected a JSON object, got {type(data).__name__}")
    return data


def _clean_str(value: Any) -> str:
    return value.strip() if isinstance(value, str) else ""


def parse_analysis(data: Any) -> CodeAnalysis:
    d = _need_dict(data)
    summary = _clean_str(d.get("summary"))
    if not summary:
        raise SchemaError("'summary' must be a nonempty string")
    raw = d.get("detected_categories", [])
    if not isinstance(raw, list):
        raise SchemaError("'detected_categories' must be a list of category names")
    categories: list[BugCategory] = []
    for item in raw:
        label = _clean_str(item).lower()
        try:
            cat = BugCategory(label)
        except ValueError:
            continue  # unrecognized label: drop rather than fail the whole reply
        if cat not in categories:
            categories.append(cat)
    if not categories:
        # An analysis naming no recognizable category still has to steer the
        # plan somewhere; a logic pass is the safe default.
        categories = [BugCategory.LOGIC]
    evidence = d.get("evidence", [])
    if not isinstance(evidence, list):
        raise SchemaError("'evidence' must be a list of strings")
    return CodeAnalysis(
        detected_categories=tuple(categories),
        summary=summary,
        evidence=tuple(str(e) for e in evidence),
    )


@dataclass(frozen=True)
class ProfileSpec:
    """A profile as proposed by the model, before priorities exist."""

    role_name: str
    objective: str
    task_prompt: str


@dataclass(frozen=True)
class ProfilingDraft:
    strategy_summary: str
    profiles: tuple[ProfileSpec, ...]


def parse_profiles(data: Any) -> ProfilingDraft:
    d = _need_dict(data)
    raw = d.get("profiles")
    if not isinstance(raw, list) or not raw:
        raise SchemaError("'profiles' must be a nonempty list of profile objects")
    specs: list[ProfileSpec] = []
    for i, item in enumerate(raw):
        if not isinstance(item, dict):
            raise SchemaError(f"profiles[{i}] must be an object")
        role = _clean_str(item.get("role_name"))
        task = _clean_str(item.get("task_prompt"))
        if not role:
            raise SchemaError(f"profiles[{i}].role_name must be a nonempty string")
        if not task:
            raise SchemaError(f"profiles[{i}].task_prompt must be a nonempty string")
        specs.append(
            ProfileSpec(role_name=role, objective=_clean_str(item.get("objective")), task_prompt=task)
        )
    return ProfilingDraft(
        strategy_summary=_clean_str(d.get("strategy_summary")),
        profiles=tuple(specs),
    )


def parse_priorities(data: Any) -> dict[str, int]:
    d = _need_dict(data)
    raw = d.get("priorities")
    if not isinstance(raw, dict) or not raw:
        raise SchemaError("'priorities' must be a nonempty object mapping role_name to rank")
    out: dict[str, int] = {}
    for role, rank in raw.items():
        if isinstance(rank, bool) or not isinstance(rank, int):
            raise SchemaError(f"priority rank for {role!r} must be an integer")
        out[str(role)] = rank
    return out


@dataclass(frozen=True)
class ReportDraft:
    findings: str
    recommendations: str
    candidate_code: Optional[str]
    claimed_status: ClaimedStatus


def parse_report(data: Any) -> ReportDraft:
    d = _need_dict(data)
    status_label = _clean_str(d.get("claimed_status")).lower()
    try:
        status = ClaimedStatus(status_label)
    except ValueError:
        raise SchemaError(
            "'claimed_status' must be one of: resolved, partial, blocked"
        ) from None
    candidate = d.get("candidate_code")
    if candidate is not None and not isinstance(candidate, str):
        raise SchemaError("'candidate_code' must be a string or null")
    return ReportDraft(
        findings=_clean_str(d.get("findings")),
        recommendations=_clean_str(d.get("recommendations")),
        candidate_code=candidate if candidate else None,
        claimed_status=status,
    )


@dataclass(frozen=True)
class VerdictDraft:
    status: VerdictStatus
    rationale: str
    final_code: Optional[str]


def parse_verdict(data: Any) -> VerdictDraft:
    d = _need_dict(data)
    status_label = _clean_str(d.get("status")).lower()
    try:
        status = VerdictStatus(status_label)
    except ValueError:
        raise SchemaError("'status' must be one of: fixed, not_fixed") from None
    final_code = d.get("final_code")
    if final_code is not None and not isinstance(final_code, str):
        raise SchemaError("'final_code' must be a string or null")
    return VerdictDraft(
        status=status,
        rationale=_clean_str(d.get("rationale")),
        final_code=final_code if final_code else None,
    )


SCHEMAS: dict[str, Callable[[Any], Any]] = {
    "analysis_v1": parse_analysis,
    "profiles_v1": parse_profiles,
    "priorities_v1": parse_priorities,
    "report_v1": parse_report,
    "verdict_v1": parse_verdict,
}
