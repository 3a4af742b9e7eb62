"""Pointwise, pairwise and staged reranking of first-stage candidate lists."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence, TypeVar

from .aggregate import PairwiseMatrix, hard_score, pairwise_scores, soft_score
from .core import Candidate, ContractViolation, Passage, Query, Ranking, ScoreScale, validate_candidates
from .scorer import (
    DEFAULT_RETRY,
    RetryPolicy,
    ScorerBackend,
    TemplateSet,
    score_binary,
    score_pairwise,
    score_pointwise,
    upr_loglikelihood,
)

log = logging.getLogger(__name__)

T = TypeVar("T")

METHODS = ("pointwise", "pairwise", "pipeline")
POINTWISE_MODES = ("soft", "hard", "binary", "upr")
_METHOD_ALIASES = {"pointwise_then_pairwise": "pipeline"}

TAIL_STEP = 1e-6


@dataclass(frozen=True)
class RerankConfig:
    method: str = "pointwise"
    pointwise_mode: str = "soft"
    pairwise_depth: int = 40
    candidate_depth: int = 100
    scale: ScoreScale = field(default_factory=ScoreScale)
    templates: TemplateSet = field(default_factory=TemplateSet.defaults)
    retry: RetryPolicy = DEFAULT_RETRY
    upr_normalize: str = "mean"

    def __post_init__(self) -> None:
        object.__setattr__(self, "method", _METHOD_ALIASES.get(self.method, self.method))
        if self.method not in METHODS:
            raise ContractViolation(f"unknown method {self.method!r}; choose from {METHODS}")
        if self.pointwise_mode not in POINTWISE_MODES:
            raise ContractViolation(f"unknown pointwise mode {self.pointwise_mode!r}")
        if self.candidate_depth < 1 or self.pairwise_depth < 1:
            raise ContractViolation("depths must be positive")
        if self.pairwise_depth > self.candidate_depth:
            raise ContractViolation(
                f"pairwise depth {self.pairwise_depth} exceeds candidate depth {self.candidate_depth}"
            )
        if self.method != "pointwise" and self.pairwise_depth < 2:
            raise ContractViolation("pairwise reranking needs a pairwise depth of at least 2")
        if self.upr_normalize not in ("mean", "total"):
            raise ContractViolation(f"unknown UPR normalisation {self.upr_normalize!r}")

    @property
    def tag(self) -> str:
        if self.method == "pointwise":
            return f"pointwise-{self.pointwise_mode}"
        if self.method == "pairwise":
            return "pairwise"
        return f"pointwise-{self.pointwise_mode}+pairwise"


def dispatch(tasks: Sequence[Callable[[], T]], parallel: int) -> list[T]:
    """Run ``tasks`` with up to ``parallel`` in flight; results keep task order.

    The first failure cancels everything not yet started and is re-raised.
    """
    if parallel <= 1 or len(tasks) <= 1:
        return [task() for task in tasks]
    pool = ThreadPoolExecutor(max_workers=min(parallel, len(tasks)))
    try:
        futures = [pool.submit(task) for task in tasks]
        return [f.result() for f in futures]
    finally:
        pool.shutdown(wait=True, cancel_futures=True)


def _lookup(passages: Mapping[str, Passage], candidates: Sequence[Candidate]) -> list[Passage]:
    try:
        return [passages[c.passage_id] for c in candidates]
    except KeyError as exc:
        raise ContractViolation(f"no passage text for candidate {exc}") from exc


def _stable_order(scores: Sequence[float]) -> list[int]:
    return sorted(range(len(scores)), key=lambda i: (-scores[i], i))


def _pointwise_task(config: RerankConfig, backend: ScorerBackend, query: Query, passage: Passage):
    mode = config.pointwise_mode
    tpl = config.templates
    if mode == "soft":
        return lambda: soft_score(
            score_pointwise(backend, tpl.pointwise, query, passage, config.scale, config.retry), config.scale
        )
    if mode == "hard":
        return lambda: float(
            hard_score(score_pointwise(backend, tpl.pointwise, query, passage, config.scale, config.retry), config.scale)
        )
    if mode == "binary":
        return lambda: score_binary(backend, tpl.binary, query, passage, config.retry)
    return lambda: upr_loglikelihood(backend, tpl.upr, query, passage, config.upr_normalize, config.retry)


def rerank_pointwise(
    config: RerankConfig,
    backend: ScorerBackend,
    query: Query,
    candidates: Sequence[Candidate],
    passages: Mapping[str, Passage],
) -> Ranking:
    """Score each candidate once and sort by score, ties kept in input order."""
    if not candidates:
        raise ContractViolation(f"query {query.id}: no candidates to rerank")
    validate_candidates(candidates)
    docs = _lookup(passages, candidates)
    scores = dispatch([_pointwise_task(config, backend, query, d) for d in docs], backend.max_parallel_requests)
    order = _stable_order(scores)
    return Ranking.from_scored(
        query.id, ((candidates[i].passage_id, scores[i]) for i in order), f"pointwise-{config.pointwise_mode}"
    )


def _with_tail(head: list[tuple[str, float]], tail: Iterable[str]) -> list[tuple[str, float]]:
    floor = min(score for _, score in head) - 1.0
    return head + [(pid, floor - pos * TAIL_STEP) for pos, pid in enumerate(tail)]


def rerank_pairwise(
    config: RerankConfig,
    backend: ScorerBackend,
    query: Query,
    candidates: Sequence[Candidate],
    passages: Mapping[str, Passage],
    method_tag: str = "pairwise",
) -> Ranking:
    """Compare every ordered pair among the top ``pairwise_depth`` candidates.

    The head is re-sorted by summed win probability; candidates past the
    depth follow in their input order with scores below the head.
    """
    validate_candidates(candidates)
    depth = min(config.pairwise_depth, len(candidates))
    if depth < 2:
        raise ContractViolation(f"query {query.id}: pairwise reranking needs at least 2 candidates")
    head = candidates[:depth]
    docs = _lookup(passages, head)
    pairs = [(i, j) for i in range(depth) for j in range(depth) if i != j]
    tpl = config.templates.pairwise
    tasks = [
        (lambda a=docs[i], b=docs[j]: score_pairwise(backend, tpl, query, a, b, config.retry)) for i, j in pairs
    ]
    probs = dispatch(tasks, backend.max_parallel_requests)
    wins = pairwise_scores(PairwiseMatrix(depth, dict(zip(pairs, probs))))
    order = _stable_order(list(wins))
    scored = [(head[i].passage_id, float(wins[i])) for i in order]
    scored = _with_tail(scored, (c.passage_id for c in candidates[depth:]))
    return Ranking.from_scored(query.id, scored, method_tag)


def rerank_pipeline(
    config: RerankConfig,
    backend: ScorerBackend,
    query: Query,
    candidates: Sequence[Candidate],
    passages: Mapping[str, Passage],
) -> Ranking:
    """Pointwise over all candidates, then pairwise over the pointwise head."""
    pointwise = rerank_pointwise(config, backend, query, candidates, passages)
    if len(pointwise) < 2:
        return Ranking(query.id, pointwise.items, config.tag)
    return rerank_pairwise(config, backend, query, pointwise.to_candidates(), passages, config.tag)


def rerank_query(
    config: RerankConfig,
    backend: ScorerBackend,
    query: Query,
    candidates: Sequence[Candidate],
    passages: Mapping[str, Passage],
) -> Ranking:
    candidates = list(candidates[: config.candidate_depth])
    if config.method == "pointwise":
        return rerank_pointwise(config, backend, query, candidates, passages)
    if config.method == "pipeline":
        return rerank_pipeline(config, backend, query, candidates, passages)
    if len(candidates) < 2:
        log.info("query %s has %d candidate(s); pairwise stage skipped", query.id, len(candidates))
        return Ranking.from_scored(query.id, ((c.passage_id, c.first_stage_score) for c in candidates), "pairwise")
    return rerank_pairwise(config, backend, query, candidates, passages)


def rerank_run(
    config: RerankConfig,
    backend: ScorerBackend,
    queries: Mapping[str, Query],
    run: Iterable[Ranking],
    passages: Mapping[str, Passage],
    on_query: Callable[[Ranking], None] | None = None,
) -> list[Ranking]:
    """Rerank every query of a first-stage run. Any failure aborts the run."""
    out = []
    for first_stage in run:
        if first_stage.query_id not in queries:
            raise ContractViolation(f"run mentions unknown query {first_stage.query_id!r}")
        if not len(first_stage):
            out.append(Ranking(first_stage.query_id, (), config.tag))
            continue
        ranking = rerank_query(config, backend, queries[first_stage.query_id], first_stage.to_candidates(), passages)
        if on_query is not None:
            on_query(ranking)
        out.append(ranking)
    return out
