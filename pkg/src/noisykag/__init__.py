"""Knowledge-grounded conversation with a noisy generated-knowledge source.

Dual-encoder knowledge selection, posterior-based reweighing, Gumbel-TopK
noisy training, and the matching evaluation toolkit, with deterministic toy
backends for desk-scale runs and an HTTP client for real model services.
"""

__version__ = "0.1.0"

from .core import (
    EOS_TOKEN,
    CandidatePool,
    DialogueHistory,
    GeneratedKnowledge,
    HyperParams,
    KnowledgeCandidate,
    KnowledgeSource,
    LogDistribution,
    Response,
    Speaker,
    Turn,
    log_softmax,
    logsumexp,
    normalize_text,
    sharpen,
)
from .selector import (
    ProjectionPair,
    SelectionResult,
    gumbel_perturb,
    noisy_top_k,
    relevance,
    score_candidates,
    top_k_select,
)
from .inference import (
    InferenceTrace,
    approximate_likelihoods,
    marginal_response_logprob,
    mean_token_prob,
    posterior,
    refine,
    respond,
    similarity_distribution,
)
from .training import (
    LossReport,
    TrainConfig,
    TrainExample,
    example_nll,
    finite_diff_check,
    grad_projections,
    grad_scores,
    load_projections,
    save_projections,
    train,
)
from .metrics import (
    NO_CONSENSUS,
    F1Triple,
    LabelMatrix,
    fleiss_kappa,
    knowledge_f1,
    majority_vote,
    p_at_k,
    perplexity,
    pooled_perplexity,
    unigram_f1,
)
from .data import DatasetError, DatasetRecord, load_dataset, save_dataset
from .estimator import KnowledgeSelector

__all__ = [
    "__version__",
    "EOS_TOKEN",
    "CandidatePool",
    "DialogueHistory",
    "GeneratedKnowledge",
    "HyperParams",
    "KnowledgeCandidate",
    "KnowledgeSource",
    "LogDistribution",
    "Response",
    "Speaker",
    "Turn",
    "log_softmax",
    "logsumexp",
    "normalize_text",
    "sharpen",
    "ProjectionPair",
    "SelectionResult",
    "gumbel_perturb",
    "noisy_top_k",
    "relevance",
    "score_candidates",
    "top_k_select",
    "InferenceTrace",
    "approximate_likelihoods",
    "marginal_response_logprob",
    "mean_token_prob",
    "posterior",
    "refine",
    "respond",
    "similarity_distribution",
    "LossReport",
    "TrainConfig",
    "TrainExample",
    "example_nll",
    "finite_diff_check",
    "grad_projections",
    "grad_scores",
    "load_projections",
    "save_projections",
    "train",
    "NO_CONSENSUS",
    "F1Triple",
    "LabelMatrix",
    "fleiss_kappa",
    "knowledge_f1",
    "majority_vote",
    "p_at_k",
    "perplexity",
    "pooled_perplexity",
    "unigram_f1",
    "DatasetError",
    "DatasetRecord",
    "load_dataset",
    "save_dataset",
    "KnowledgeSelector",
]
