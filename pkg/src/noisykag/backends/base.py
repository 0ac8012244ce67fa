"""Model backend contracts: a text encoder and a conditional response generator.

Implementations must be deterministic for fixed configuration and tolerate
concurrent calls (pure or internally synchronized).
"""

from __future__ import annotations

import threading
from abc import ABC, abstractmethod

import numpy as np

from ..core import DialogueHistory, KnowledgeCandidate, Response


class EmbeddingBackend(ABC):
    """Maps text to a fixed-length vector representation."""

    @property
    @abstractmethod
    def dim(self) -> int: ...

    @abstractmethod
    def embed(self, text: str) -> np.ndarray:
        """Vector of exactly ``dim`` entries; deterministic per input."""

    def embed_many(self, texts: list[str]) -> list[np.ndarray]:
        return [self.embed(t) for t in texts]


class GeneratorBackend(ABC):
    """Conditional response model: per-token scoring and greedy decoding."""

    @property
    @abstractmethod
    def max_len(self) -> int: ...

    @property
    def vocab(self) -> frozenset[str] | None:
        """Known token inventory, or None when the backend does not expose one."""
        return None

    @abstractmethod
    def score_tokens(
        self, history: DialogueHistory, knowledge: KnowledgeCandidate, tokens: tuple[str, ...]
    ) -> tuple[float, ...]:
        """Natural-log probability of each token given history, knowledge, and prefix."""

    @abstractmethod
    def greedy(
        self, history: DialogueHistory, knowledge: KnowledgeCandidate, max_len: int | None = None
    ) -> Response:
        """Deterministic greedy decode with per-step log-probabilities."""


class CachingEncoder(EmbeddingBackend):
    """Memoizes ``embed`` per text; safe for concurrent use.

    Wrap remote or repeatedly-queried encoders so identical inputs are
    embedded once per run (backends are deterministic within a run).
    """

    def __init__(self, inner: EmbeddingBackend):
        self.inner = inner
        self._cache: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()

    @property
    def dim(self) -> int:
        return self.inner.dim

    def embed(self, text: str) -> np.ndarray:
        with self._lock:
            hit = self._cache.get(text)
        if hit is not None:
            return hit
        vec = self.inner.embed(text)
        with self._lock:
            self._cache[text] = vec
        return vec


def _history_key(history: DialogueHistory) -> tuple:
    return tuple((t.speaker.value, t.text) for t in history.turns)


class CachingGenerator(GeneratorBackend):
    """Memoizes ``score_tokens`` and ``greedy`` per (history, knowledge, input)."""

    def __init__(self, inner: GeneratorBackend):
        self.inner = inner
        self._scores: dict[tuple, tuple[float, ...]] = {}
        self._decodes: dict[tuple, Response] = {}
        self._lock = threading.Lock()

    @property
    def max_len(self) -> int:
        return self.inner.max_len

    @property
    def vocab(self) -> frozenset[str] | None:
        return self.inner.vocab

    def score_tokens(self, history, knowledge, tokens):
        key = (_history_key(history), knowledge.id, knowledge.text, tuple(tokens))
        with self._lock:
            hit = self._scores.get(key)
        if hit is not None:
            return hit
        out = self.inner.score_tokens(history, knowledge, tokens)
        with self._lock:
            self._scores[key] = out
        return out

    def greedy(self, history, knowledge, max_len=None):
        key = (_history_key(history), knowledge.id, knowledge.text, max_len)
        with self._lock:
            hit = self._decodes.get(key)
        if hit is not None:
            return hit
        out = self.inner.greedy(history, knowledge, max_len)
        with self._lock:
            self._decodes[key] = out
        return out
