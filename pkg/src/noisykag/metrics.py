"""Evaluation metrics: token-overlap F1, selection accuracy, perplexity, and
multi-rater agreement."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Final, Hashable, Sequence

import numpy as np

from .core import normalize_text

#: Distinguished majority-vote outcome for ties; reserved, not a real label.
NO_CONSENSUS: Final[str] = "<no-consensus>"


@dataclass(frozen=True)
class F1Triple:
    precision: float
    recall: float
    f1: float


def _overlap_f1(hyp_tokens: list[str], ref_tokens: list[str]) -> F1Triple:
    if not hyp_tokens and not ref_tokens:
        return F1Triple(1.0, 1.0, 1.0)
    if not hyp_tokens or not ref_tokens:
        return F1Triple(0.0, 0.0, 0.0)
    overlap = sum((Counter(hyp_tokens) & Counter(ref_tokens)).values())
    precision = overlap / len(hyp_tokens)
    recall = overlap / len(ref_tokens)
    if precision + recall == 0.0:
        return F1Triple(0.0, 0.0, 0.0)
    return F1Triple(precision, recall, 2 * precision * recall / (precision + recall))


def unigram_f1(hypothesis: str, reference: str) -> F1Triple:
    """Clipped-multiset token overlap F1 after text normalization."""
    return _overlap_f1(normalize_text(hypothesis), normalize_text(reference))


def knowledge_f1(response: str, gold_knowledge: str) -> F1Triple:
    """Token overlap between a response and the gold knowledge text: how much
    of that knowledge the response carries."""
    return unigram_f1(response, gold_knowledge)


def p_at_k(ranked_ids: Sequence[str], gold_id: str, k: int) -> int:
    """1 iff the gold id appears among the first k ranked ids."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if gold_id not in ranked_ids:
        raise ValueError(f"gold id {gold_id!r} not present in the ranked candidate list")
    return int(gold_id in list(ranked_ids)[:k])


def perplexity(total_logprob: float, token_count: int) -> float:
    """exp(-total_logprob / token_count)."""
    if token_count < 1:
        raise ValueError("token_count must be >= 1")
    return math.exp(-total_logprob / token_count)


def pooled_perplexity(total_logprobs: Sequence[float], token_counts: Sequence[int]) -> float:
    """Corpus perplexity: pool log-probability and token mass, then exponentiate."""
    if len(total_logprobs) != len(token_counts):
        raise ValueError("need one token count per logprob")
    return perplexity(float(sum(total_logprobs)), int(sum(token_counts)))


def majority_vote(labels: Sequence[Hashable]) -> Hashable:
    """Most frequent label; a tie yields the distinguished NO_CONSENSUS value."""
    if not labels:
        raise ValueError("cannot vote on an empty label sequence")
    counts = Counter(labels).most_common()
    if len(counts) > 1 and counts[0][1] == counts[1][1]:
        return NO_CONSENSUS
    return counts[0][0]


@dataclass(frozen=True)
class LabelMatrix:
    """Item x category assignment counts with a fixed rater count per item."""

    counts: np.ndarray
    raters: int

    def __post_init__(self) -> None:
        arr = np.asarray(self.counts, dtype=np.int64).copy()
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 2:
            raise ValueError("counts must be items x categories with >= 2 categories")
        if np.any(arr < 0):
            raise ValueError("counts must be non-negative")
        if self.raters < 2:
            raise ValueError("need at least 2 raters")
        if not np.all(arr.sum(axis=1) == self.raters):
            raise ValueError(f"every row must sum to the rater count {self.raters}")
        arr.flags.writeable = False
        object.__setattr__(self, "counts", arr)


def fleiss_kappa(m: LabelMatrix) -> float:
    """Chance-corrected multi-rater agreement.

    Per-item agreement averages the pairwise rater agreement; expected
    agreement comes from the squared category marginals.  The degenerate
    single-category case (expected agreement 1) is defined as 1 when observed
    agreement is also 1, and is an error otherwise.
    """
    n = m.raters
    counts = m.counts.astype(np.float64)
    p_items = (np.sum(counts**2, axis=1) - n) / (n * (n - 1))
    p_bar = float(np.mean(p_items))
    marginals = counts.sum(axis=0) / counts.sum()
    p_expected = float(np.sum(marginals**2))
    if p_expected >= 1.0 - 1e-15:
        if p_bar >= 1.0 - 1e-15:
            return 1.0
        raise ValueError("degenerate marginal: all assignments in one category")
    return (p_bar - p_expected) / (1.0 - p_expected)
