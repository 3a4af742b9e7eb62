"""Shared domain types, error hierarchy and option-probability helpers."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


class RerankError(Exception):
    """Base class for every error raised by this package."""


class ContractViolation(RerankError, ValueError):
    """A caller broke an operation's precondition."""


class DegenerateInputError(RerankError, ValueError):
    pass


class IngestionError(RerankError):
    """Bad on-disk input. Carries the offending line number when known."""

    def __init__(self, message: str, *, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)


class ValidationError(IngestionError):
    """Structurally valid input whose content violates a ranking invariant."""


@dataclass(frozen=True)
class Query:
    id: str
    text: str

    def __post_init__(self) -> None:
        if not self.id:
            raise ContractViolation("query id must be non-empty")
        if not self.text.strip():
            raise ContractViolation(f"query {self.id!r} has empty text")


@dataclass(frozen=True)
class Passage:
    id: str
    text: str
    title: str = ""

    def __post_init__(self) -> None:
        if not self.id:
            raise ContractViolation("passage id must be non-empty")

    @property
    def full_text(self) -> str:
        """Title and body joined by a single space (body alone if untitled)."""
        return f"{self.title} {self.text}" if self.title else self.text


@dataclass(frozen=True)
class Candidate:
    passage_id: str
    first_stage_score: float
    first_stage_rank: int

    def __post_init__(self) -> None:
        if self.first_stage_rank < 1:
            raise ContractViolation(f"candidate {self.passage_id!r}: rank must be >= 1")


def validate_candidates(candidates: Sequence[Candidate]) -> None:
    """Check ranks are 1..m in order, ids distinct and scores non-increasing."""
    seen: set[str] = set()
    prev_score = math.inf
    for pos, cand in enumerate(candidates, start=1):
        if cand.first_stage_rank != pos:
            raise ContractViolation(
                f"candidate {cand.passage_id!r} has rank {cand.first_stage_rank}, expected {pos}"
            )
        if cand.passage_id in seen:
            raise ContractViolation(f"duplicate candidate {cand.passage_id!r}")
        if cand.first_stage_score > prev_score:
            raise ContractViolation(f"candidate scores increase at rank {pos}")
        seen.add(cand.passage_id)
        prev_score = cand.first_stage_score


@dataclass(frozen=True)
class ScoreScale:
    """Ordered option values and the single tokens the scorer emits for them."""

    options: tuple[int, ...] = (1, 2, 3, 4, 5)
    option_tokens: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        options = tuple(int(v) for v in self.options)
        tokens = tuple(self.option_tokens) or tuple(str(v) for v in options)
        object.__setattr__(self, "options", options)
        object.__setattr__(self, "option_tokens", tokens)
        if len(options) < 2:
            raise ContractViolation("a score scale needs at least two options")
        if any(b <= a for a, b in zip(options, options[1:])):
            raise ContractViolation(f"scale options must be strictly increasing: {options}")
        if len(tokens) != len(options):
            raise ContractViolation("need exactly one token per option")
        if len(set(tokens)) != len(tokens):
            raise ContractViolation(f"option tokens must be distinct: {tokens}")

    @classmethod
    def likert(cls, low: int = 1, high: int = 5) -> "ScoreScale":
        return cls(tuple(range(low, high + 1)))

    def __len__(self) -> int:
        return len(self.options)

    @property
    def label(self) -> str:
        return f"{self.options[0]}-{self.options[-1]}"


@dataclass(frozen=True)
class ScoreDistribution:
    probs: tuple[float, ...]

    def __post_init__(self) -> None:
        probs = tuple(float(p) for p in self.probs)
        object.__setattr__(self, "probs", probs)
        if any(not (0.0 <= p <= 1.0) for p in probs):
            raise ContractViolation(f"probabilities must lie in [0, 1]: {probs}")
        if abs(sum(probs) - 1.0) > 1e-6:
            raise ContractViolation(f"probabilities must sum to 1: {probs}")

    def __len__(self) -> int:
        return len(self.probs)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.probs, dtype=np.float64)


def normalize_over_options(raw_logprobs: Sequence[float], scale: ScoreScale | None = None) -> ScoreDistribution:
    """Softmax of option log-probabilities, renormalised over the option set only.

    Mass the model puts on tokens outside the option set is discarded. Entries
    may be ``-inf`` (option never produced) but not all of them.
    """
    values = np.asarray(raw_logprobs, dtype=np.float64)
    if values.ndim != 1:
        raise ContractViolation("log-probabilities must be a flat vector")
    if scale is not None and len(values) != len(scale):
        raise ContractViolation(
            f"got {len(values)} log-probabilities for a {len(scale)}-option scale"
        )
    if np.any(np.isnan(values)) or np.any(values == np.inf):
        raise ContractViolation(f"log-probabilities must be finite or -inf: {values.tolist()}")
    top = values.max(initial=-np.inf)
    if top == -np.inf:
        raise DegenerateInputError("every option has zero probability")
    weights = np.exp(values - top)
    return ScoreDistribution(tuple(weights / weights.sum()))


@dataclass(frozen=True)
class RankedItem:
    passage_id: str
    score: float
    rank: int


@dataclass(frozen=True)
class Ranking:
    query_id: str
    items: tuple[RankedItem, ...]
    method_tag: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "items", tuple(self.items))
        seen: set[str] = set()
        prev = math.inf
        for pos, item in enumerate(self.items, start=1):
            if item.rank != pos:
                raise ContractViolation(f"{self.query_id}: rank {item.rank} at position {pos}")
            if item.score > prev:
                raise ContractViolation(f"{self.query_id}: scores increase at rank {pos}")
            if item.passage_id in seen:
                raise ContractViolation(f"{self.query_id}: duplicate passage {item.passage_id!r}")
            seen.add(item.passage_id)
            prev = item.score

    @classmethod
    def from_scored(cls, query_id: str, scored: Iterable[tuple[str, float]], method_tag: str = "") -> "Ranking":
        """Build from (passage_id, score) pairs that are already in rank order."""
        items = tuple(RankedItem(pid, float(score), rank) for rank, (pid, score) in enumerate(scored, start=1))
        return cls(query_id, items, method_tag)

    @property
    def passage_ids(self) -> list[str]:
        return [item.passage_id for item in self.items]

    def __len__(self) -> int:
        return len(self.items)

    def to_candidates(self) -> list[Candidate]:
        return [Candidate(i.passage_id, i.score, i.rank) for i in self.items]
