"""NDCG@k with trec_eval ``ndcg_cut`` conventions."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .core import ContractViolation, Ranking, RerankError

Qrels = dict[str, dict[str, int]]

GAINS = ("linear", "exponential")


class InputError(RerankError, ValueError):
    pass


def _gain(grade: int, gain: str) -> float:
    if grade <= 0:
        return 0.0
    return float(grade) if gain == "linear" else float(2**grade - 1)


def dcg(grades: Iterable[int], k: int, gain: str = "linear") -> float:
    total = 0.0
    for i, grade in enumerate(grades):
        if i >= k:
            break
        total += _gain(grade, gain) / math.log2(i + 2)
    return total


def ndcg_at_k(ranking: Ranking, qrels: Mapping[str, int], k: int = 10, gain: str = "linear") -> float | None:
    """NDCG@k of one ranking, or ``None`` when the query has no relevant passage.

    Unjudged passages count as grade 0. The ideal ordering is built from all
    judged grades of the query, so relevant passages missing from the ranking
    still lower the score.
    """
    if k < 1:
        raise ContractViolation("k must be positive")
    if gain not in GAINS:
        raise ContractViolation(f"unknown gain {gain!r}")
    ideal = sorted((g for g in qrels.values() if g > 0), reverse=True)
    if not ideal:
        return None
    idcg = dcg(ideal, k, gain)
    actual = dcg((qrels.get(pid, 0) for pid in ranking.passage_ids), k, gain)
    return actual / idcg


@dataclass
class EvalReport:
    metric: str
    per_query: dict[str, float]
    mean: float
    skipped: list[str] = field(default_factory=list)

    @property
    def num_queries_evaluated(self) -> int:
        return len(self.per_query)

    def to_json(self) -> dict:
        return {"metric": self.metric, "mean": self.mean, "per_query": self.per_query}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=False)

    def text_report(self) -> str:
        lines = [f"{self.metric}\t{qid}\t{value:.4f}" for qid, value in self.per_query.items()]
        lines.append(f"{self.metric}\tall\t{self.mean:.4f}")
        lines.append(f"num_q\tall\t{self.num_queries_evaluated}")
        if self.skipped:
            lines.append(f"skipped\tall\t{' '.join(self.skipped)}")
        return "\n".join(lines) + "\n"


def evaluate_run(run: Iterable[Ranking], qrels: Mapping[str, Mapping[str, int]], k: int = 10, gain: str = "linear") -> EvalReport:
    """Mean NDCG@k over queries that have at least one relevant judgement."""
    per_query: dict[str, float] = {}
    skipped: list[str] = []
    seen: set[str] = set()
    for ranking in run:
        if ranking.query_id in seen:
            raise InputError(f"query {ranking.query_id!r} appears twice in the run")
        seen.add(ranking.query_id)
        value = ndcg_at_k(ranking, qrels.get(ranking.query_id, {}), k, gain)
        if value is None:
            skipped.append(ranking.query_id)
        else:
            per_query[ranking.query_id] = value
    mean = math.fsum(per_query.values()) / len(per_query) if per_query else 0.0
    return EvalReport(f"ndcg_cut_{k}", per_query, mean, skipped)
