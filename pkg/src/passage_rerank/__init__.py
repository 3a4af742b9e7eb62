"""Unsupervised LLM passage reranking with soft Likert scores and pairwise tournaments."""

__version__ = "0.1.0"

from .aggregate import PairwiseMatrix, hard_score, pairwise_scores, soft_score
from .bm25 import Bm25Params, InvertedIndex, build_index, search, tokenize
from .core import (
    Candidate,
    ContractViolation,
    DegenerateInputError,
    IngestionError,
    Passage,
    Query,
    RankedItem,
    Ranking,
    RerankError,
    ScoreDistribution,
    ScoreScale,
    ValidationError,
    normalize_over_options,
)
from .metrics import EvalReport, evaluate_run, ndcg_at_k
from .rerank import RerankConfig, rerank_pairwise, rerank_pipeline, rerank_pointwise, rerank_query, rerank_run

__all__ = [
    "Bm25Params",
    "Candidate",
    "ContractViolation",
    "DegenerateInputError",
    "EvalReport",
    "IngestionError",
    "InvertedIndex",
    "PairwiseMatrix",
    "Passage",
    "Query",
    "RankedItem",
    "Ranking",
    "RerankConfig",
    "RerankError",
    "ScoreDistribution",
    "ScoreScale",
    "ValidationError",
    "build_index",
    "evaluate_run",
    "hard_score",
    "ndcg_at_k",
    "normalize_over_options",
    "pairwise_scores",
    "rerank_pairwise",
    "rerank_pipeline",
    "rerank_pointwise",
    "rerank_query",
    "rerank_run",
    "search",
    "soft_score",
    "tokenize",
]
