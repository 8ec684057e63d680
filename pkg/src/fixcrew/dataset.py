"""Load benchmark instances from the canonical JSON Lines format.

The canonical file carries one instance object per line using the domain
field names (see :mod:`fixcrew.types`). A separate converter maps upstream
benchmark releases (DebugBench-style records) into this format so the loader
never has to track upstream schema drift.

Loading is deterministic: filter, seeded shuffle, then limit. Bad records are
collected with their line numbers; a run aborts when more than 10% of records
fail to load.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Optional

from .types import (
    DIFFICULTY_ALIASES,
    BugCategory,
    BugInstance,
    ComplexityLevel,
    InvariantError,
    _require,
)

logger = logging.getLogger(__name__)


class DatasetError(Exception):
    """Too many records failed to load, or the file itself is unusable."""

    def __init__(self, message: str, record_errors: Optional[list[tuple[int, str]]] = None):
        super().__init__(message)
        self.record_errors = record_errors or []


@dataclass(frozen=True)
class DatasetFilter:
    categories: Optional[frozenset[BugCategory]] = None
    complexities: Optional[frozenset[ComplexityLevel]] = None
    limit: Optional[int] = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.limit is not None:
            _require(self.limit >= 1, "limit must be >= 1 when present")
        if self.categories is not None:
            object.__setattr__(self, "categories", frozenset(self.categories))
        if self.complexities is not None:
            object.__setattr__(self, "complexities", frozenset(self.complexities))

    def admits(self, instance: BugInstance) -> bool:
        if self.categories is not None and instance.category not in self.categories:
            return False
        if self.complexities is not None and instance.complexity not in self.complexities:
            return False
        return True


def _canonical_complexity(label: str) -> ComplexityLevel:
    level = DIFFICULTY_ALIASES.get(label.strip().lower())
    if level is None:
        # "unknown" is reserved for ad-hoc inputs; a dataset may not use it.
        raise InvariantError(f"unmapped complexity label in dataset: {label!r}")
    return level


def _instance_from_record(record: Mapping[str, Any]) -> BugInstance:
    if not isinstance(record, Mapping):
        raise InvariantError("record is not a JSON object")
    d = dict(record)
    complexity = d.get("complexity")
    if not isinstance(complexity, str):
        raise InvariantError("field 'complexity' must be a string")
    d["complexity"] = _canonical_complexity(complexity).value
    return BugInstance.from_dict(d)


def load_dataset(path: str | Path, dataset_filter: DatasetFilter = DatasetFilter()) -> list[BugInstance]:
    """Read, validate, filter, seeded-shuffle and limit a canonical dataset."""
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"dataset file not found: {path}")
    instances: list[BugInstance] = []
    errors: list[tuple[int, str]] = []
    seen_ids: set[str] = set()
    total = 0
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            total += 1
            try:
                record = json.loads(line)
                instance = _instance_from_record(record)
                if instance.id in seen_ids:
                    raise InvariantError(f"duplicate instance id: {instance.id}")
                seen_ids.add(instance.id)
                instances.append(instance)
            except (json.JSONDecodeError, InvariantError, ValueError) as exc:
                errors.append((lineno, str(exc)))
                logger.warning("%s:%d: skipping record: %s", path, lineno, exc)
    if total and len(errors) / total > 0.10:
        detail = "; ".join(f"line {n}: {msg}" for n, msg in errors[:10])
        raise DatasetError(
            f"{len(errors)}/{total} records failed to load (>10%): {detail}",
            record_errors=errors,
        )

    kept = [inst for inst in instances if dataset_filter.admits(inst)]
    random.Random(dataset_filter.seed).shuffle(kept)
    if dataset_filter.limit is not None:
        kept = kept[: dataset_filter.limit]
    return kept


# ----- upstream release converter -------------------------------------------

# Upstream bug-type labels (e.g. "syntax error", "misused ==/=", "double")
# collapse onto the four canonical categories. Compound labels such as
# "double"/"triple"/"quadruple" mark instances seeded with several bugs.
_CATEGORY_HINTS = (
    ("syntax", BugCategory.SYNTAX),
    ("reference", BugCategory.REFERENCE),
    ("logic", BugCategory.LOGIC),
    ("multiple", BugCategory.MULTIPLE),
    ("double", BugCategory.MULTIPLE),
    ("triple", BugCategory.MULTIPLE),
    ("quadruple", BugCategory.MULTIPLE),
)


def _pick(record: Mapping[str, Any], *keys: str) -> Optional[Any]:
    for key in keys:
        value = record.get(key)
        if value not in (None, ""):
            return value
    return None


def convert_upstream_record(record: Mapping[str, Any]) -> dict[str, Any]:
    """Map one upstream benchmark record onto the canonical instance schema.

    Field mapping (first present wins):
      id     <- id | slug | task_id
      title  <- title | question_title | slug
      description <- description | question | content
      buggy_code  <- buggy_code | code
      language    <- language (default "python")
      category    <- category | bug_type | type  (label containing one of the
                     hints above)
      complexity  <- complexity | level | difficulty (easy/medium/hard)
      tests       <- tests | examples ({input, expected_output|output})
      reference_solution <- reference_solution | oracle_code | solution
    """
    raw_category = _pick(record, "category", "bug_type", "type")
    if not isinstance(raw_category, str):
        raise InvariantError("record has no usable bug-type label")
    label = raw_category.strip().lower()
    category = next((cat for hint, cat in _CATEGORY_HINTS if hint in label), None)
    if category is None:
        raise InvariantError(f"unknown bug-type label: {raw_category!r}")

    raw_level = _pick(record, "complexity", "level", "difficulty")
    if not isinstance(raw_level, str):
        raise InvariantError("record has no usable difficulty label")
    complexity = _canonical_complexity(raw_level)

    raw_tests = _pick(record, "tests", "examples") or []
    tests = []
    for entry in raw_tests:
        if not isinstance(entry, Mapping):
            continue
        expected = _pick(entry, "expected_output", "output")
        if entry.get("input") is None or expected is None:
            continue
        tests.append(
            {
                "input": str(entry["input"]),
                "expected_output": str(expected),
                "comparison": "exact_trimmed",
                "tolerance": None,
            }
        )

    instance_id = _pick(record, "id", "slug", "task_id")
    if not instance_id:
        raise InvariantError("record has no id/slug")
    buggy_code = _pick(record, "buggy_code", "code")
    if not buggy_code:
        raise InvariantError("record has no buggy code")

    canonical = {
        "id": str(instance_id),
        "title": str(_pick(record, "title", "question_title", "slug") or instance_id),
        "description": str(_pick(record, "description", "question", "content") or ""),
        "buggy_code": str(buggy_code),
        "language": str(record.get("language") or "python").lower(),
        "category": category.value,
        "complexity": complexity.value,
        "tests": tests,
        "reference_solution": _pick(record, "reference_solution", "oracle_code", "solution"),
    }
    # Validate eagerly so conversion fails next to the offending record.
    _instance_from_record(canonical)
    return canonical


def convert_upstream_file(src: str | Path, dst: str | Path) -> tuple[int, int]:
    """Convert an upstream JSONL release file; returns (converted, skipped)."""
    src, dst = Path(src), Path(dst)
    converted = skipped = 0
    with src.open("r", encoding="utf-8") as fin, dst.open("w", encoding="utf-8") as fout:
        for lineno, line in enumerate(fin, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                canonical = convert_upstream_record(json.loads(line))
            except (json.JSONDecodeError, InvariantError, ValueError) as exc:
                skipped += 1
                logger.warning("%s:%d: cannot convert record: %s", src, lineno, exc)
                continue
            fout.write(json.dumps(canonical, ensure_ascii=False) + "\n")
            converted += 1
    return converted, skipped
