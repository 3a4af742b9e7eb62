"""Turn (query, passage[, passage]) into option probabilities via a backend."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass
from typing import Callable, TypeVar

from ..core import ContractViolation, Passage, Query, ScoreDistribution, ScoreScale, normalize_over_options
from .backends import (
    BackendError,
    LikelihoodRequest,
    OptionRequest,
    ProtocolError,
    ScorerBackend,
    TransportError,
)
from .templates import (
    BINARY,
    BINARY_LABELS,
    PAIRWISE,
    PAIRWISE_LABELS,
    POINTWISE,
    PromptTemplate,
    render_binary_prompt,
    render_pairwise_prompt,
    render_pointwise_prompt,
    render_upr_context,
)

log = logging.getLogger(__name__)

T = TypeVar("T")


@dataclass(frozen=True)
class RetryPolicy:
    """Transport failures are retried ``retries`` times with exponential backoff."""

    retries: int = 3
    base_delay: float = 0.1
    factor: float = 2.0

    def delay(self, attempt: int) -> float:
        return self.base_delay * self.factor ** (attempt - 1)


DEFAULT_RETRY = RetryPolicy()


def call_with_retry(
    fn: Callable[[], T], policy: RetryPolicy, query_id: str, passage_ids: tuple[str, ...]
) -> T:
    attempt = 0
    while True:
        attempt += 1
        try:
            return fn()
        except TransportError as exc:
            if attempt > policy.retries:
                raise exc.with_context(query_id, passage_ids, attempts=attempt) from exc
            wait = policy.delay(attempt)
            log.warning("transient backend failure (%s), retry %d in %.2fs", exc.message, attempt, wait)
            time.sleep(wait)
        except BackendError as exc:
            raise exc.with_context(query_id, passage_ids, attempts=attempt) from exc


def _option_probs(
    backend: ScorerBackend, request: OptionRequest, retry: RetryPolicy
) -> ScoreDistribution:
    ids = tuple(p.id for p in request.passages)
    logprobs = call_with_retry(lambda: backend.option_logprobs(request), retry, request.query.id, ids)
    try:
        raw = [logprobs[tok] for tok in request.options]
    except KeyError as exc:
        raise ProtocolError(f"backend omitted option {exc}", query_id=request.query.id, passage_ids=ids) from exc
    return normalize_over_options(raw)


def score_pointwise(
    backend: ScorerBackend,
    template: PromptTemplate,
    query: Query,
    passage: Passage,
    scale: ScoreScale,
    retry: RetryPolicy = DEFAULT_RETRY,
) -> ScoreDistribution:
    prompt = render_pointwise_prompt(template, query, passage, scale)
    request = OptionRequest(POINTWISE, prompt, scale.option_tokens, query, (passage,))
    return _option_probs(backend, request, retry)


def score_pairwise(
    backend: ScorerBackend,
    template: PromptTemplate,
    query: Query,
    passage_a: Passage,
    passage_b: Passage,
    retry: RetryPolicy = DEFAULT_RETRY,
) -> float:
    """Probability that ``passage_a`` (shown first) is picked over ``passage_b``."""
    if passage_a.id == passage_b.id:
        raise ContractViolation(f"cannot compare passage {passage_a.id!r} with itself")
    prompt = render_pairwise_prompt(template, query, passage_a, passage_b)
    request = OptionRequest(PAIRWISE, prompt, PAIRWISE_LABELS, query, (passage_a, passage_b))
    return _option_probs(backend, request, retry).probs[0]


def score_binary(
    backend: ScorerBackend,
    template: PromptTemplate,
    query: Query,
    passage: Passage,
    retry: RetryPolicy = DEFAULT_RETRY,
) -> float:
    """Probability of "yes", renormalised over {yes, no}."""
    prompt = render_binary_prompt(template, query, passage)
    request = OptionRequest(BINARY, prompt, BINARY_LABELS, query, (passage,))
    return _option_probs(backend, request, retry).probs[0]


def upr_loglikelihood(
    backend: ScorerBackend,
    template: PromptTemplate,
    query: Query,
    passage: Passage,
    normalize: str = "mean",
    retry: RetryPolicy = DEFAULT_RETRY,
) -> float:
    """Log-likelihood of the query text given the passage prompt.

    ``normalize="mean"`` divides by the token count the backend reports;
    ``"total"`` returns the summed log-probability.
    """
    if not query.text.strip():
        raise ContractViolation("query text is empty")
    if normalize not in ("mean", "total"):
        raise ContractViolation(f"unknown normalisation {normalize!r}")
    request = LikelihoodRequest(render_upr_context(template, passage), query.text, query, passage)
    logprob, num_tokens = call_with_retry(lambda: backend.loglikelihood(request), retry, query.id, (passage.id,))
    if not math.isfinite(logprob):
        raise ProtocolError("non-finite log-likelihood", query_id=query.id, passage_ids=(passage.id,))
    return logprob / num_tokens if normalize == "mean" else logprob
