"""Inference-time knowledge reweighing and response production.

The path: score candidates against the history, keep the top K, reweigh the
prior by similarity to the generated knowledge, estimate per-candidate
response likelihoods from greedy decodes, apply Bayes rule with a sharpness
exponent, and emit the decode of the winning candidate.  Selection noise is
a training-time device only; inference always uses the clean top-K.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .backends.base import EmbeddingBackend, GeneratorBackend
from .core import (
    CandidatePool,
    DialogueHistory,
    GeneratedKnowledge,
    HyperParams,
    KnowledgeCandidate,
    LogDistribution,
    Response,
    logsumexp,
    safe_log,
    sharpen,
)
from .selector import ProjectionPair, SelectionResult, score_candidates, top_k_select


class InferenceError(Exception):
    """A pipeline stage failed; the message carries the stage label."""


def similarity_distribution(
    g: GeneratedKnowledge,
    retained: list[KnowledgeCandidate],
    proj: ProjectionPair,
    encoder: EmbeddingBackend,
    alpha: float,
) -> LogDistribution:
    """Softmax over retained candidates of their generated-knowledge affinity.

    The generated knowledge goes through the history-side projection; alpha
    divides the scores, so large alpha flattens toward uniform.
    """
    if not retained:
        raise ValueError("retained candidate list must be non-empty")
    if not alpha > 0:
        raise ValueError("alpha must be > 0")
    g_vec = encoder.embed(g.text)
    ids = [c.id for c in retained]
    z_vecs = [encoder.embed(c.text) for c in retained]
    scores = score_candidates(g_vec, ids, z_vecs, proj)
    return LogDistribution.from_scores(ids, [scores[cid] / alpha for cid in ids])


def uniform_distribution(ids: tuple[str, ...]) -> LogDistribution:
    return LogDistribution(ids, np.full(len(ids), -math.log(len(ids))))


def refine(prior: LogDistribution, similarity: LogDistribution) -> LogDistribution:
    """Elementwise product of two distributions, renormalized over their ids."""
    if set(prior.ids) != set(similarity.ids):
        raise ValueError("prior and similarity must range over the same ids")
    sim = similarity.as_dict()
    combined = prior.logweights + np.array([sim[cid] for cid in prior.ids])
    return LogDistribution(prior.ids, combined - logsumexp(combined), normalized=True)


def mean_token_prob(resp: Response) -> float:
    """Arithmetic mean of per-token probabilities, in probability space."""
    if resp.token_logprobs is None:
        raise ValueError("response has no token logprobs")
    if not resp.tokens:
        raise ValueError("response must have at least one token")
    return float(np.mean(np.exp(np.asarray(resp.token_logprobs, dtype=np.float64))))


def approximate_likelihoods(
    history: DialogueHistory,
    retained: list[KnowledgeCandidate],
    generator: GeneratorBackend,
    max_len: int | None = None,
) -> tuple[dict[str, float], dict[str, Response]]:
    """Greedy decode per retained candidate and take each decode's mean token
    probability as a stand-in for the response likelihood."""
    if not retained:
        raise ValueError("retained candidate list must be non-empty")
    likelihoods: dict[str, float] = {}
    decoded: dict[str, Response] = {}
    for cand in retained:
        try:
            resp = generator.greedy(history, cand, max_len)
        except Exception as exc:
            raise InferenceError(f"greedy decode failed for candidate {cand.id!r}: {exc}") from exc
        decoded[cand.id] = resp
        likelihoods[cand.id] = mean_token_prob(resp)
    return likelihoods, decoded


def posterior(
    refined: LogDistribution, likelihoods: dict[str, float], beta: float
) -> LogDistribution:
    """Bayes update of the refined distribution by the likelihoods, then
    sharpened by the exponent beta in [0, 1]."""
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must be in [0, 1]")
    if set(likelihoods) != set(refined.ids):
        raise ValueError("likelihood ids must match the refined distribution")
    for cid, lik in likelihoods.items():
        if not lik > 0:
            raise ValueError(f"likelihood for {cid!r} must be positive, got {lik}")
    combined = refined.logweights + np.array([safe_log(likelihoods[cid]) for cid in refined.ids])
    post = LogDistribution(refined.ids, combined - logsumexp(combined), normalized=True)
    return sharpen(post, beta)


def marginal_response_logprob(
    selection: LogDistribution, per_id_response_logprob: dict[str, float]
) -> float:
    """log of the selection-weighted mixture of per-candidate response
    probabilities, via log-sum-exp."""
    if not selection.normalized:
        raise ValueError("selection distribution must be normalized")
    if set(per_id_response_logprob) != set(selection.ids):
        raise ValueError("response logprob ids must match the selection distribution")
    terms = selection.logweights + np.array(
        [per_id_response_logprob[cid] for cid in selection.ids]
    )
    return logsumexp(terms)


@dataclass(frozen=True)
class InferenceTrace:
    """Every intermediate of one inference pass, over one retained id set."""

    prior: LogDistribution
    similarity: LogDistribution
    refined: LogDistribution
    posterior: LogDistribution
    likelihoods: dict[str, float]
    decoded: dict[str, Response]
    final_id: str
    final_response: Response
    raw_scores: dict[str, float] = field(default_factory=dict)

    @property
    def retained(self) -> tuple[str, ...]:
        return self.prior.ids


def respond(
    history: DialogueHistory,
    pool: CandidatePool,
    g: GeneratedKnowledge | None,
    proj: ProjectionPair,
    encoder: EmbeddingBackend,
    generator: GeneratorBackend,
    hyper: HyperParams,
    max_len: int | None = None,
) -> InferenceTrace:
    """Full inference pass; never consults the pool's gold id.

    With ``g`` None the similarity factor is uniform, so the refined
    distribution falls back to the prior.
    """
    pool_order = {c.id: i for i, c in enumerate(pool.candidates)}

    try:
        h_vec = encoder.embed(history.flat_text())
        ids = [c.id for c in pool.candidates]
        z_vecs = [encoder.embed(c.text) for c in pool.candidates]
    except Exception as exc:
        raise InferenceError(f"embedding failed: {exc}") from exc

    scores = score_candidates(h_vec, ids, z_vecs, proj)
    selection: SelectionResult = top_k_select(scores, hyper.k)
    retained_cands = [pool.by_id(cid) for cid in selection.retained]

    if g is None:
        similarity = uniform_distribution(selection.retained)
    else:
        try:
            similarity = similarity_distribution(
                g, retained_cands, proj, encoder, hyper.alpha
            )
        except InferenceError:
            raise
        except Exception as exc:
            raise InferenceError(f"similarity stage failed: {exc}") from exc

    refined = refine(selection.prior, similarity)
    likelihoods, decoded = approximate_likelihoods(history, retained_cands, generator, max_len)
    post = posterior(refined, likelihoods, hyper.beta)

    final_id = post.argmax_id(tie_order=pool_order)
    return InferenceTrace(
        prior=selection.prior,
        similarity=similarity,
        refined=refined,
        posterior=post,
        likelihoods=likelihoods,
        decoded=decoded,
        final_id=final_id,
        final_response=decoded[final_id],
        raw_scores=selection.raw_scores,
    )
