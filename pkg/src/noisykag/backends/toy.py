"""Deterministic desk-scale backends.

The encoder is a hashed signed bag-of-words: cheap, process-stable, and
shared tokens raise dot products, which gives the similarity machinery real
structure to work with.  The generator mixes a copy distribution over the
knowledge and history tokens, an add-one-smoothed bigram model estimated
from a small corpus file, and a uniform floor, so its likelihoods genuinely
depend on which knowledge candidate conditions the decode.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..core import (
    EOS_TOKEN,
    DialogueHistory,
    KnowledgeCandidate,
    Response,
    normalize_text,
)
from .base import EmbeddingBackend, GeneratorBackend

START_CONTEXT = "<s>"  # bigram context for the first step; never emitted


@dataclass(frozen=True)
class ToyEncoderConfig:
    dim: int = 32
    hash_seed: int = 0

    def __post_init__(self) -> None:
        if self.dim < 2:
            raise ValueError("encoder dim must be >= 2")
        if not 0 <= self.hash_seed < 2**64:
            raise ValueError("hash_seed must fit in 64 unsigned bits")


class ToyEncoder(EmbeddingBackend):
    """Hashed signed bag-of-words over normalized tokens, L2-normalized."""

    def __init__(self, config: ToyEncoderConfig | None = None):
        self.config = config or ToyEncoderConfig()

    @property
    def dim(self) -> int:
        return self.config.dim

    def _bucket(self, token: str) -> tuple[int, float]:
        digest = hashlib.blake2b(
            token.encode("utf-8"),
            digest_size=9,
            key=self.config.hash_seed.to_bytes(8, "little"),
        ).digest()
        index = int.from_bytes(digest[:8], "little") % self.config.dim
        sign = 1.0 if digest[8] & 1 else -1.0
        return index, sign

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.config.dim)
        for token in normalize_text(text):
            index, sign = self._bucket(token)
            vec[index] += sign
        norm = float(np.linalg.norm(vec))
        if norm > 0.0:
            vec /= norm
        vec.flags.writeable = False
        return vec


@dataclass(frozen=True)
class ToyGeneratorConfig:
    corpus_path: str | Path
    lambda_copy: float = 0.7
    lambda_bigram: float = 0.2
    lambda_uniform: float = 0.1
    max_len: int = 10

    def __post_init__(self) -> None:
        lambdas = (self.lambda_copy, self.lambda_bigram, self.lambda_uniform)
        if any(l < 0 for l in lambdas):
            raise ValueError("mixture weights must be non-negative")
        if abs(sum(lambdas) - 1.0) > 1e-12:
            raise ValueError(f"mixture weights must sum to 1, got {sum(lambdas)}")
        if self.max_len < 1:
            raise ValueError("max_len must be >= 1")


class ToyGenerator(GeneratorBackend):
    """Copy/bigram/uniform mixture over a fixed vocabulary.

    The vocabulary is every corpus token plus the reserved end-of-sequence
    token; each mixture component is itself a distribution over it, so the
    per-step probabilities sum to 1 exactly up to float rounding.
    """

    def __init__(self, config: ToyGeneratorConfig):
        self.config = config
        lines = Path(config.corpus_path).read_text(encoding="utf-8").splitlines()
        token_lines = [normalize_text(line) for line in lines]
        token_lines = [toks for toks in token_lines if toks]
        if not token_lines:
            raise ValueError(f"corpus {config.corpus_path} has no usable lines")

        words = sorted({tok for toks in token_lines for tok in toks} | {EOS_TOKEN})
        self._vocab_list = words
        self._vocab_index = {tok: i for i, tok in enumerate(words)}
        v = len(words)

        # Add-one smoothed bigram rows, with a line-start context and an EOS
        # transition after each line so decodes learn to terminate.
        counts: dict[str, np.ndarray] = {}
        for toks in token_lines:
            chain = [START_CONTEXT, *toks, EOS_TOKEN]
            for prev, nxt in zip(chain, chain[1:]):
                row = counts.setdefault(prev, np.zeros(v))
                row[self._vocab_index[nxt]] += 1.0
        self._bigram_rows = {
            prev: (row + 1.0) / (row.sum() + v) for prev, row in counts.items()
        }
        self._bigram_unseen = np.full(v, 1.0 / v)
        self._uniform = np.full(v, 1.0 / v)

    @property
    def max_len(self) -> int:
        return self.config.max_len

    @property
    def vocab(self) -> frozenset[str]:
        return frozenset(self._vocab_list)

    def _copy_dist(self, history: DialogueHistory, knowledge: KnowledgeCandidate) -> np.ndarray:
        """Uniform over the in-vocabulary multiset of knowledge and history tokens.

        An empty copy source falls back to the uniform distribution.
        """
        counts = np.zeros(len(self._vocab_list))
        for tok in normalize_text(knowledge.text) + normalize_text(history.flat_text()):
            idx = self._vocab_index.get(tok)
            if idx is not None:
                counts[idx] += 1.0
        total = counts.sum()
        if total == 0.0:
            return self._uniform
        return counts / total

    def _step_probs(self, copy_dist: np.ndarray, prev: str | None) -> np.ndarray:
        context = prev if prev is not None else START_CONTEXT
        bigram = self._bigram_rows.get(context, self._bigram_unseen)
        cfg = self.config
        return (
            cfg.lambda_copy * copy_dist
            + cfg.lambda_bigram * bigram
            + cfg.lambda_uniform * self._uniform
        )

    def step_logprobs(
        self, history: DialogueHistory, knowledge: KnowledgeCandidate, prefix: tuple[str, ...]
    ) -> dict[str, float]:
        """Full next-token log-distribution for one decoding step."""
        copy_dist = self._copy_dist(history, knowledge)
        prev = prefix[-1] if prefix else None
        probs = self._step_probs(copy_dist, prev)
        return {
            tok: (math.log(p) if p > 0.0 else -math.inf)
            for tok, p in zip(self._vocab_list, probs)
        }

    def token_logprob(
        self,
        history: DialogueHistory,
        knowledge: KnowledgeCandidate,
        prefix: tuple[str, ...],
        next_token: str,
    ) -> float:
        idx = self._vocab_index.get(next_token)
        if idx is None:
            raise ValueError(f"token {next_token!r} is not in the generator vocabulary")
        copy_dist = self._copy_dist(history, knowledge)
        prev = prefix[-1] if prefix else None
        p = float(self._step_probs(copy_dist, prev)[idx])
        return min(math.log(p), 0.0) if p > 0.0 else -math.inf

    def score_tokens(self, history, knowledge, tokens):
        tokens = tuple(tokens)
        copy_dist = self._copy_dist(history, knowledge)
        out = []
        prev: str | None = None
        for tok in tokens:
            idx = self._vocab_index.get(tok)
            if idx is None:
                raise ValueError(f"token {tok!r} is not in the generator vocabulary")
            p = float(self._step_probs(copy_dist, prev)[idx])
            out.append(min(math.log(p), 0.0) if p > 0.0 else -math.inf)
            prev = tok
        return tuple(out)

    def greedy(self, history, knowledge, max_len=None):
        limit = self.config.max_len if max_len is None else max_len
        if limit < 1:
            raise ValueError("max_len must be >= 1")
        copy_dist = self._copy_dist(history, knowledge)
        tokens: list[str] = []
        logprobs: list[float] = []
        prev: str | None = None
        for _ in range(limit):
            probs = self._step_probs(copy_dist, prev)
            # vocab is lexicographically sorted, so the first maximum is the tie rule
            idx = int(np.argmax(probs))
            tok = self._vocab_list[idx]
            tokens.append(tok)
            logprobs.append(min(math.log(float(probs[idx])), 0.0))
            if tok == EOS_TOKEN:
                break
            prev = tok
        return Response(tuple(tokens), tuple(logprobs))
