"""Prompt templates with ``{placeholder}`` substitution and passage truncation."""

from __future__ import annotations

import string
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence

from ..core import Passage, Query, RerankError, ScoreScale

POINTWISE = "pointwise"
PAIRWISE = "pairwise"
BINARY = "binary"
UPR = "upr"

KNOWN_PLACEHOLDERS = frozenset({"query", "passage", "passage_a", "passage_b", "options"})

_REQUIRED = {
    POINTWISE: {"query", "passage"},
    BINARY: {"query", "passage"},
    PAIRWISE: {"query", "passage_a", "passage_b"},
    UPR: {"passage"},
}

DEFAULT_MAX_PASSAGE_CHARS = 2000
PAIRWISE_LABELS = ("A", "B")
BINARY_LABELS = ("yes", "no")


class TemplateError(RerankError, ValueError):
    pass


def placeholders(body: str) -> set[str]:
    try:
        fields = {name for _, name, _, _ in string.Formatter().parse(body) if name is not None}
    except ValueError as exc:
        raise TemplateError(f"malformed template: {exc}") from exc
    return fields


def truncate_at_whitespace(text: str, budget: int) -> str:
    """Cut ``text`` to at most ``budget`` chars, preferring a whitespace boundary."""
    if len(text) <= budget:
        return text
    head = text[:budget]
    if not text[budget].isspace():
        cut = max(head.rfind(" "), head.rfind("\n"), head.rfind("\t"))
        if cut > 0:
            head = head[:cut]
    return head.rstrip()


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    body: str
    kind: str = POINTWISE
    max_passage_chars: int = DEFAULT_MAX_PASSAGE_CHARS

    def __post_init__(self) -> None:
        if self.kind not in _REQUIRED:
            raise TemplateError(f"unknown template kind {self.kind!r}")
        if self.max_passage_chars < 1:
            raise TemplateError("max_passage_chars must be positive")
        found = placeholders(self.body)
        unknown = found - KNOWN_PLACEHOLDERS
        if unknown:
            raise TemplateError(f"template {self.name!r} has unknown placeholders: {sorted(unknown)}")
        missing = _REQUIRED[self.kind] - found
        if missing:
            raise TemplateError(f"{self.kind} template {self.name!r} lacks placeholders: {sorted(missing)}")
        # formatting with a positional field would fail later, catch it now
        if "" in found:
            raise TemplateError(f"template {self.name!r} has an empty placeholder '{{}}'")

    @classmethod
    def from_file(cls, path: str | Path, kind: str, max_passage_chars: int = DEFAULT_MAX_PASSAGE_CHARS) -> "PromptTemplate":
        path = Path(path)
        body = path.read_text(encoding="utf-8").rstrip("\n")
        return cls(path.stem, body, kind, max_passage_chars)

    @classmethod
    def default(cls, kind: str, max_passage_chars: int = DEFAULT_MAX_PASSAGE_CHARS) -> "PromptTemplate":
        body = resources.files("passage_rerank").joinpath("templates", f"{kind}.txt").read_text(encoding="utf-8")
        return cls(f"default-{kind}", body.rstrip("\n"), kind, max_passage_chars)

    def _passage(self, passage: Passage) -> str:
        return truncate_at_whitespace(passage.full_text, self.max_passage_chars)

    def _fill(self, **values: str) -> str:
        try:
            return self.body.format(**values)
        except (KeyError, IndexError) as exc:
            raise TemplateError(f"unresolved placeholder {exc} in template {self.name!r}") from exc


def _option_label(kind: str, tokens: Sequence[str], scale: ScoreScale | None) -> str:
    if kind == POINTWISE and scale is not None:
        return scale.label
    return " or ".join(tokens)


def render_pointwise_prompt(template: PromptTemplate, query: Query, passage: Passage, scale: ScoreScale) -> str:
    if template.kind != POINTWISE:
        raise TemplateError(f"expected a pointwise template, got {template.kind}")
    return template._fill(query=query.text, passage=template._passage(passage), options=scale.label)


def render_binary_prompt(template: PromptTemplate, query: Query, passage: Passage) -> str:
    if template.kind != BINARY:
        raise TemplateError(f"expected a binary template, got {template.kind}")
    return template._fill(
        query=query.text, passage=template._passage(passage), options=_option_label(BINARY, BINARY_LABELS, None)
    )


def render_pairwise_prompt(template: PromptTemplate, query: Query, passage_a: Passage, passage_b: Passage) -> str:
    if template.kind != PAIRWISE:
        raise TemplateError(f"expected a pairwise template, got {template.kind}")
    return template._fill(
        query=query.text,
        passage_a=template._passage(passage_a),
        passage_b=template._passage(passage_b),
        options=_option_label(PAIRWISE, PAIRWISE_LABELS, None),
    )


def render_upr_context(template: PromptTemplate, passage: Passage) -> str:
    if template.kind != UPR:
        raise TemplateError(f"expected a upr template, got {template.kind}")
    return template._fill(passage=template._passage(passage), query="", options="")


@dataclass(frozen=True)
class TemplateSet:
    pointwise: PromptTemplate
    pairwise: PromptTemplate
    binary: PromptTemplate
    upr: PromptTemplate

    @classmethod
    def defaults(cls, max_passage_chars: int = DEFAULT_MAX_PASSAGE_CHARS) -> "TemplateSet":
        return cls(*(PromptTemplate.default(k, max_passage_chars) for k in (POINTWISE, PAIRWISE, BINARY, UPR)))
