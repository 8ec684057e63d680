"""Versioned prompt template catalog.

Templates live as plain-text files with a small front-matter header
(``template_id``, ``version``, ``required_slots``, ``output_schema_id``) and
``{{slot}}`` placeholders in the body. The catalog is closed: exactly the
seven known template ids must be present, and a mismatch is a startup error,
so benchmark reports can pin the template versions a run used.

Rendering is a pure function and enforces the held-out-solution firewall:
callers pass the texts that must never reach a prompt (the instance's
reference solution) and rendering fails loudly if one appears.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional

from .schemas import SCHEMAS

EXPECTED_TEMPLATES = frozenset(
    {
        "main_analysis_v1",
        "profiling_v1",
        "prioritization_v1",
        "specialized_task_v1",
        "validation_v1",
        "replan_v1",
        "one_shot_baseline_v1",
    }
)

_SLOT_RE = re.compile(r"\{\{([a-z][a-z0-9_]*)\}\}")

DEFAULT_TEMPLATE_DIR = Path(__file__).parent / "prompt_files"


class PromptError(Exception):
    pass


class UnknownTemplate(PromptError):
    pass


class MissingSlot(PromptError):
    pass


class FirewallViolation(PromptError):
    """A forbidden text (held-out reference solution) reached a prompt."""


class CatalogError(PromptError):
    """The template directory does not form a valid closed catalog."""


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    version: int
    body: str
    required_slots: tuple[str, ...]
    output_schema_id: Optional[str] = None

    def __post_init__(self) -> None:
        referenced = set(_SLOT_RE.findall(self.body))
        undeclared = referenced - set(self.required_slots)
        if undeclared:
            raise CatalogError(
                f"{self.template_id}: body references undeclared slots {sorted(undeclared)}"
            )
        if self.output_schema_id is not None and self.output_schema_id not in SCHEMAS:
            raise CatalogError(
                f"{self.template_id}: unregistered output schema {self.output_schema_id!r}"
            )


def _parse_template_file(path: Path) -> PromptTemplate:
    text = path.read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines or lines[0].strip() != "---":
        raise CatalogError(f"{path.name}: missing front-matter opening '---'")
    meta: dict[str, str] = {}
    body_start = None
    for i, line in enumerate(lines[1:], start=1):
        if line.strip() == "---":
            body_start = i + 1
            break
        if ":" not in line:
            raise CatalogError(f"{path.name}: malformed front-matter line {line!r}")
        key, _, value = line.partition(":")
        meta[key.strip()] = value.strip()
    if body_start is None:
        raise CatalogError(f"{path.name}: missing front-matter closing '---'")
    try:
        template_id = meta["template_id"]
        version = int(meta["version"])
    except (KeyError, ValueError) as exc:
        raise CatalogError(f"{path.name}: front-matter needs template_id and integer version") from exc
    slots = tuple(s.strip() for s in meta.get("required_slots", "").split(",") if s.strip())
    schema_id = meta.get("output_schema_id") or None
    body = "\n".join(lines[body_start:]).strip("\n") + "\n"
    return PromptTemplate(
        template_id=template_id,
        version=version,
        body=body,
        required_slots=slots,
        output_schema_id=schema_id,
    )


class PromptCatalog:
    def __init__(self, templates: Mapping[str, PromptTemplate]):
        self._templates = dict(templates)

    def get(self, template_id: str) -> PromptTemplate:
        try:
            return self._templates[template_id]
        except KeyError:
            raise UnknownTemplate(f"unknown template: {template_id}") from None

    def versions(self) -> dict[str, int]:
        return {tid: t.version for tid, t in sorted(self._templates.items())}

    def render(
        self,
        template_id: str,
        bindings: Mapping[str, str],
        forbidden: Iterable[str] = (),
    ) -> str:
        """Substitute slots in a single pass; extra bindings are ignored.

        Substitution is single-pass, so a binding value containing ``{{...}}``
        is never re-expanded.
        """
        template = self.get(template_id)
        missing = [s for s in template.required_slots if s not in bindings]
        if missing:
            raise MissingSlot(f"{template_id}: missing slot(s) {missing}")

        def _sub(match: re.Match[str]) -> str:
            return str(bindings[match.group(1)])

        rendered = _SLOT_RE.sub(_sub, template.body)
        for secret in forbidden:
            if secret and secret.strip() and secret.strip() in rendered:
                raise FirewallViolation(
                    f"{template_id}: rendered prompt contains held-out solution text"
                )
        return rendered


def load_catalog(directory: str | Path | None = None) -> PromptCatalog:
    """Load and validate the closed template catalog from ``directory``."""
    directory = Path(directory) if directory is not None else DEFAULT_TEMPLATE_DIR
    if not directory.is_dir():
        raise CatalogError(f"template directory not found: {directory}")
    templates: dict[str, PromptTemplate] = {}
    for path in sorted(directory.glob("*.txt")):
        template = _parse_template_file(path)
        if template.template_id in templates:
            raise CatalogError(f"duplicate template id: {template.template_id}")
        templates[template.template_id] = template
    present = set(templates)
    if present != EXPECTED_TEMPLATES:
        missing = sorted(EXPECTED_TEMPLATES - present)
        extra = sorted(present - EXPECTED_TEMPLATES)
        raise CatalogError(f"catalog is closed; missing={missing} unexpected={extra}")
    return PromptCatalog(templates)
