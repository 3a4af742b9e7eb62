from .backends import (
    BackendError,
    CountingBackend,
    HttpBackend,
    LikelihoodRequest,
    OptionRequest,
    OracleBackend,
    OracleRelevanceTable,
    ProtocolError,
    ScorerBackend,
    TransportError,
    UnsupportedModeError,
    oracle_distribution,
    oracle_pairwise_probability,
    oracle_yes_probability,
)
from .cache import CachedBackend, ScoreCache
from .scoring import (
    DEFAULT_RETRY,
    RetryPolicy,
    score_binary,
    score_pairwise,
    score_pointwise,
    upr_loglikelihood,
)
from .templates import (
    PromptTemplate,
    TemplateError,
    TemplateSet,
    render_binary_prompt,
    render_pairwise_prompt,
    render_pointwise_prompt,
    render_upr_context,
)

__all__ = [
    "BackendError",
    "CachedBackend",
    "CountingBackend",
    "DEFAULT_RETRY",
    "HttpBackend",
    "LikelihoodRequest",
    "OptionRequest",
    "OracleBackend",
    "OracleRelevanceTable",
    "PromptTemplate",
    "ProtocolError",
    "RetryPolicy",
    "ScoreCache",
    "ScorerBackend",
    "TemplateError",
    "TemplateSet",
    "TransportError",
    "UnsupportedModeError",
    "oracle_distribution",
    "oracle_pairwise_probability",
    "oracle_yes_probability",
    "render_binary_prompt",
    "render_pairwise_prompt",
    "render_pointwise_prompt",
    "render_upr_context",
    "score_binary",
    "score_pairwise",
    "score_pointwise",
    "upr_loglikelihood",
]
