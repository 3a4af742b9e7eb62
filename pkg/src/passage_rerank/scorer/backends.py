"""Scoring backends.

A backend answers two kinds of requests: log-probabilities of a fixed set of
single-token options for the first generated position, and the log-likelihood
of a continuation given a context. Requests carry the rendered prompt *and*
the query/passages it was rendered from, so prompt-driven backends (HTTP) and
id-driven backends (the oracle) share one interface.
"""

from __future__ import annotations

import hashlib
import json
import math
import threading
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Protocol, runtime_checkable

import numpy as np
import requests

from ..core import Passage, Query, RerankError, ScoreDistribution, ScoreScale
from .templates import BINARY, PAIRWISE, POINTWISE


class BackendError(RerankError):
    """Scoring failed. Carries the query/passage context and attempt count."""

    def __init__(
        self,
        message: str,
        *,
        query_id: str | None = None,
        passage_ids: tuple[str, ...] = (),
        attempts: int | None = None,
    ):
        self.message = message
        self.query_id = query_id
        self.passage_ids = tuple(passage_ids)
        self.attempts = attempts
        super().__init__(self._describe())

    def _describe(self) -> str:
        parts = [self.message]
        if self.query_id is not None:
            parts.append(f"query={self.query_id}")
        if self.passage_ids:
            parts.append("passages=" + ",".join(self.passage_ids))
        if self.attempts is not None:
            parts.append(f"attempts={self.attempts}")
        return " | ".join(parts)

    def with_context(self, query_id: str, passage_ids: tuple[str, ...], attempts: int | None = None) -> "BackendError":
        return type(self)(self.message, query_id=query_id, passage_ids=passage_ids, attempts=attempts)


class TransportError(BackendError):
    """Backend unreachable or temporarily failing; safe to retry."""


class ProtocolError(BackendError):
    """Backend answered, but not in the agreed format."""


class UnsupportedModeError(BackendError):
    pass


@dataclass(frozen=True)
class OptionRequest:
    kind: str
    prompt: str
    options: tuple[str, ...]
    query: Query
    passages: tuple[Passage, ...]

    @property
    def key(self) -> str:
        return "|".join((self.kind, self.query.id, *(p.id for p in self.passages)))


@dataclass(frozen=True)
class LikelihoodRequest:
    context: str
    continuation: str
    query: Query
    passage: Passage

    @property
    def key(self) -> str:
        return f"upr|{self.query.id}|{self.passage.id}"


@runtime_checkable
class ScorerBackend(Protocol):
    identity: str
    max_parallel_requests: int

    def option_logprobs(self, request: OptionRequest) -> Mapping[str, float]: ...

    def loglikelihood(self, request: LikelihoodRequest) -> tuple[float, int]: ...


def _log_sigmoid(x: float) -> float:
    if x == math.inf:
        return 0.0
    if x == -math.inf:
        return -math.inf
    if x >= 0:
        return -math.log1p(math.exp(-x))
    return x - math.log1p(math.exp(x))


def _scaled(sharpness: float, delta: float) -> float:
    # inf * 0 must stay 0 for the infinitely sharp oracle
    return 0.0 if delta == 0 else sharpness * delta


def _unit_normal(seed: int, query_id: str, passage_id: str) -> float:
    digest = hashlib.blake2b(f"{seed}\x1f{query_id}\x1f{passage_id}".encode(), digest_size=8).digest()
    return float(np.random.default_rng(int.from_bytes(digest, "little")).standard_normal())


@dataclass(frozen=True)
class OracleRelevanceTable:
    """Hidden relevance grades that drive the deterministic oracle backend.

    ``noise`` adds a reproducible Gaussian perturbation (std ``noise``) to the
    grade the oracle perceives for each pair; with ``noise == 0`` the oracle
    sees the table grades exactly. Missing pairs have grade 0.
    """

    grades: Mapping[tuple[str, str], int]
    sharpness: float = 10.0
    max_grade: int | None = None
    noise: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.sharpness >= 0:
            raise ValueError("oracle sharpness must be >= 0")
        if self.noise < 0:
            raise ValueError("oracle noise must be >= 0")
        for pair, grade in self.grades.items():
            if grade < 0 or (self.max_grade is not None and grade > self.max_grade):
                raise ValueError(f"grade {grade} for {pair} outside [0, {self.max_grade}]")

    @classmethod
    def from_qrels(cls, qrels: Mapping[str, Mapping[str, int]], **kwargs) -> "OracleRelevanceTable":
        grades = {(qid, pid): int(g) for qid, docs in qrels.items() for pid, g in docs.items()}
        return cls(grades, **kwargs)

    def grade(self, query_id: str, passage_id: str) -> int:
        return self.grades.get((query_id, passage_id), 0)

    def perceived(self, query_id: str, passage_id: str) -> float:
        grade = float(self.grade(query_id, passage_id))
        if self.noise == 0:
            return grade
        return grade + self.noise * _unit_normal(self.seed, query_id, passage_id)

    def fingerprint(self) -> str:
        payload = json.dumps(
            [sorted((q, p, g) for (q, p), g in self.grades.items()), self.sharpness, self.noise, self.seed]
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _peaked_probs(n_options: int, center: float, sharpness: float) -> np.ndarray:
    dist = np.abs(np.arange(n_options, dtype=np.float64) - center)
    if math.isinf(sharpness):
        mask = dist == dist.min()
        return mask / mask.sum()
    logits = -sharpness * dist
    weights = np.exp(logits - logits.max())
    return weights / weights.sum()


def oracle_distribution(
    table: OracleRelevanceTable, scale: ScoreScale, query_id: str, passage_id: str
) -> ScoreDistribution:
    """Distribution peaked at option index ``min(grade, |options| - 1)``.

    ``probs[j]`` is proportional to ``exp(-sharpness * |j - peak|)``.
    """
    top = len(scale) - 1
    center = min(max(table.perceived(query_id, passage_id), 0.0), float(top))
    return ScoreDistribution(tuple(_peaked_probs(len(scale), center, table.sharpness)))


def oracle_pairwise_probability(table: OracleRelevanceTable, query_id: str, first_id: str, second_id: str) -> float:
    """Logistic in the grade difference: ``sigmoid(sharpness * (g_first - g_second))``."""
    return math.exp(_log_sigmoid(_pairwise_logit(table, query_id, first_id, second_id)))


def _pairwise_logit(table: OracleRelevanceTable, query_id: str, first_id: str, second_id: str) -> float:
    delta = table.perceived(query_id, first_id) - table.perceived(query_id, second_id)
    return _scaled(table.sharpness, delta)


def oracle_yes_probability(table: OracleRelevanceTable, query_id: str, passage_id: str) -> float:
    """Yes/no oracle that only perceives relevant (grade >= 1) versus not.

    ``sigmoid(sharpness * (2 * min(g, 1) - 1))``: grade 0 tends to 0 and any
    positive grade tends to 1 as the sharpness grows.
    """
    return math.exp(_log_sigmoid(_yes_logit(table, query_id, passage_id)))


def _yes_logit(table: OracleRelevanceTable, query_id: str, passage_id: str) -> float:
    g = min(table.perceived(query_id, passage_id), 1.0)
    return _scaled(table.sharpness, 2.0 * g - 1.0)


class OracleBackend:
    """Pure-function backend answering from an :class:`OracleRelevanceTable`."""

    def __init__(self, table: OracleRelevanceTable, max_parallel_requests: int = 1):
        if max_parallel_requests < 1:
            raise ValueError("max_parallel_requests must be >= 1")
        self.table = table
        self.max_parallel_requests = max_parallel_requests
        self.identity = f"oracle:{table.fingerprint()}"

    def option_logprobs(self, request: OptionRequest) -> dict[str, float]:
        qid = request.query.id
        if request.kind == POINTWISE:
            (passage,) = request.passages
            scale = ScoreScale(tuple(range(1, len(request.options) + 1)), request.options)
            probs = oracle_distribution(self.table, scale, qid, passage.id).probs
            return {tok: (math.log(p) if p > 0 else -math.inf) for tok, p in zip(request.options, probs)}
        if request.kind == PAIRWISE:
            first, second = request.passages
            x = _pairwise_logit(self.table, qid, first.id, second.id)
            return dict(zip(request.options, (_log_sigmoid(x), _log_sigmoid(-x))))
        if request.kind == BINARY:
            (passage,) = request.passages
            x = _yes_logit(self.table, qid, passage.id)
            return dict(zip(request.options, (_log_sigmoid(x), _log_sigmoid(-x))))
        raise UnsupportedModeError(f"oracle cannot answer {request.kind!r} requests")

    def loglikelihood(self, request: LikelihoodRequest) -> tuple[float, int]:
        raise UnsupportedModeError("the oracle backend has no sequence likelihoods")


class HttpBackend:
    """Client for the ``/v1/score_options`` and ``/v1/loglikelihood`` endpoints."""

    def __init__(self, base_url: str, *, timeout: float = 60.0, max_parallel_requests: int = 4):
        if max_parallel_requests < 1:
            raise ValueError("max_parallel_requests must be >= 1")
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.max_parallel_requests = max_parallel_requests
        self.identity = f"http:{self.base_url}"
        self._local = threading.local()

    def _session(self) -> requests.Session:
        session = getattr(self._local, "session", None)
        if session is None:
            session = self._local.session = requests.Session()
        return session

    def _post(self, path: str, payload: dict) -> dict:
        url = self.base_url + path
        try:
            resp = self._session().post(url, json=payload, timeout=self.timeout)
        except (requests.ConnectionError, requests.Timeout) as exc:
            raise TransportError(f"POST {url} failed: {exc.__class__.__name__}") from exc
        if resp.status_code == 404 and path == "/v1/loglikelihood":
            raise UnsupportedModeError(f"{self.base_url} does not serve {path}")
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransportError(f"POST {url} returned HTTP {resp.status_code}")
        if resp.status_code != 200:
            raise ProtocolError(f"POST {url} returned HTTP {resp.status_code}")
        try:
            data = resp.json()
        except ValueError as exc:
            raise ProtocolError(f"POST {url} returned non-JSON body") from exc
        if not isinstance(data, dict):
            raise ProtocolError(f"POST {url} returned {type(data).__name__}, expected an object")
        return data

    def option_logprobs(self, request: OptionRequest) -> dict[str, float]:
        data = self._post("/v1/score_options", {"prompt": request.prompt, "options": list(request.options)})
        logprobs = data.get("logprobs")
        if not isinstance(logprobs, dict):
            raise ProtocolError("response lacks a 'logprobs' object")
        out = {}
        for tok in request.options:
            if tok not in logprobs:
                raise ProtocolError(f"response lacks option {tok!r}")
            value = logprobs[tok]
            if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ProtocolError(f"option {tok!r} has non-finite log-probability {value!r}")
            out[tok] = float(value)
        return out

    def loglikelihood(self, request: LikelihoodRequest) -> tuple[float, int]:
        data = self._post("/v1/loglikelihood", {"context": request.context, "continuation": request.continuation})
        logprob, num_tokens = data.get("logprob"), data.get("num_tokens")
        if isinstance(logprob, bool) or not isinstance(logprob, (int, float)) or not math.isfinite(logprob):
            raise ProtocolError(f"bad 'logprob' in response: {logprob!r}")
        if isinstance(num_tokens, bool) or not isinstance(num_tokens, int) or num_tokens < 1:
            raise ProtocolError(f"bad 'num_tokens' in response: {num_tokens!r}")
        return float(logprob), num_tokens


@dataclass
class CountingBackend:
    """Wraps a backend and counts calls per request kind (thread-safe)."""

    inner: ScorerBackend
    counts: Counter = field(default_factory=Counter)

    def __post_init__(self) -> None:
        self._lock = threading.Lock()

    @property
    def identity(self) -> str:
        return self.inner.identity

    @property
    def max_parallel_requests(self) -> int:
        return self.inner.max_parallel_requests

    def _bump(self, kind: str) -> None:
        with self._lock:
            self.counts[kind] += 1

    def option_logprobs(self, request: OptionRequest) -> Mapping[str, float]:
        self._bump(request.kind)
        return self.inner.option_logprobs(request)

    def loglikelihood(self, request: LikelihoodRequest) -> tuple[float, int]:
        self._bump("upr")
        return self.inner.loglikelihood(request)

    def reset(self) -> Counter:
        with self._lock:
            snapshot, self.counts = self.counts, Counter()
        return snapshot
