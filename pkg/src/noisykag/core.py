"""Shared domain types, text normalization, and log-space probability utilities.

Every distribution in the pipeline is a :class:`LogDistribution` carried in
natural-log space; probabilities materialize only at API boundaries.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

# Floor for probability-space values that must be logged.  Genuine structural
# zeros keep -inf; this floor only guards against float underflow.
PROB_FLOOR = 1e-300

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def normalize_text(raw: str) -> list[str]:
    """Lowercase, replace punctuation with spaces, split on whitespace.

    Empty input yields an empty list.  Idempotent when re-applied to its own
    space-joined output.
    """
    return _TOKEN_RE.findall(raw.lower())


def safe_log(p: float) -> float:
    """Natural log with the underflow floor; log(0) stays -inf only for exact 0."""
    if p < 0:
        raise ValueError(f"cannot take log of negative value {p}")
    if p == 0.0:
        return -math.inf
    return math.log(max(p, PROB_FLOOR))


def logsumexp(values: np.ndarray) -> float:
    """log(sum(exp(values))) with the max-subtraction trick."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("logsumexp of empty input")
    m = np.max(values)
    if not np.isfinite(m):
        # all -inf -> -inf; any +inf/nan propagates
        return float(m) if m == -np.inf else float(m + 0.0)
    return float(m + np.log(np.sum(np.exp(values - m))))


def log_softmax(logits) -> np.ndarray:
    """logits_i - logsumexp(logits), stable under shifts; exps sum to 1.

    Raises on empty input or non-finite values.
    """
    arr = np.asarray(logits, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("log_softmax of empty input")
    if not np.all(np.isfinite(arr)):
        raise ValueError("log_softmax requires finite logits")
    out = arr - logsumexp(arr)
    out.flags.writeable = False
    return out


class Speaker(str, Enum):
    WIZARD = "wizard"
    APPRENTICE = "apprentice"
    SYSTEM = "system"


@dataclass(frozen=True)
class Turn:
    """One conversation turn."""

    speaker: Speaker
    text: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "speaker", Speaker(self.speaker))
        if not self.text.strip():
            raise ValueError("turn text must be non-empty after trimming")


@dataclass(frozen=True)
class DialogueHistory:
    """The conversation so far; at least one turn."""

    turns: tuple[Turn, ...]
    topic: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "turns", tuple(self.turns))
        if not self.turns:
            raise ValueError("dialogue history needs at least one turn")

    def flat_text(self) -> str:
        """All turn texts joined with single spaces (encoder input form)."""
        return " ".join(t.text for t in self.turns)


@dataclass(frozen=True)
class KnowledgeCandidate:
    id: str
    text: str

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("candidate id must be non-empty")
        if not self.text.strip():
            raise ValueError(f"candidate {self.id!r} has empty text")


@dataclass(frozen=True)
class CandidatePool:
    """Ordered candidate pool; gold_id, when present, names exactly one member."""

    candidates: tuple[KnowledgeCandidate, ...]
    gold_id: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "candidates", tuple(self.candidates))
        if not self.candidates:
            raise ValueError("candidate pool must be non-empty")
        ids = [c.id for c in self.candidates]
        if len(set(ids)) != len(ids):
            raise ValueError("candidate ids must be unique within a pool")
        if self.gold_id is not None and ids.count(self.gold_id) != 1:
            raise ValueError(f"gold_id {self.gold_id!r} does not match exactly one candidate")

    def by_id(self, cid: str) -> KnowledgeCandidate:
        for c in self.candidates:
            if c.id == cid:
                return c
        raise KeyError(cid)

    def index_of(self, cid: str) -> int:
        for i, c in enumerate(self.candidates):
            if c.id == cid:
                return i
        raise KeyError(cid)


class KnowledgeSource(str, Enum):
    DATASET = "dataset"
    REMOTE = "remote"


@dataclass(frozen=True)
class GeneratedKnowledge:
    """A knowledge-like sentence from a large generator, treated as noisy ground truth."""

    text: str
    source: KnowledgeSource = KnowledgeSource.DATASET

    def __post_init__(self) -> None:
        object.__setattr__(self, "source", KnowledgeSource(self.source))
        if not self.text.strip():
            raise ValueError("generated knowledge text must be non-empty")


@dataclass(frozen=True)
class Response:
    """A token sequence with optional per-token natural-log probabilities."""

    tokens: tuple[str, ...]
    token_logprobs: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if self.token_logprobs is not None:
            lps = tuple(float(x) for x in self.token_logprobs)
            object.__setattr__(self, "token_logprobs", lps)
            if len(lps) != len(self.tokens):
                raise ValueError("token_logprobs length must match tokens")
            if any(lp > 0.0 for lp in lps):
                raise ValueError("token logprobs must be <= 0")

    def text(self) -> str:
        """Tokens joined with spaces, reserved control tokens dropped."""
        return " ".join(t for t in self.tokens if t != EOS_TOKEN)


EOS_TOKEN = "</s>"


@dataclass(frozen=True)
class HyperParams:
    """Selection and reweighing hyper-parameters.

    k: retained pool size; alpha: similarity sharpness; beta: posterior
    sharpness in [0, 1]; gumbel_scale/gumbel_location: noise parameters for
    noisy training; seed: root seed for all stochastic operations.
    """

    k: int = 4
    alpha: float = 5.0
    beta: float = 0.4
    gumbel_scale: float = 1.0
    gumbel_location: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not self.alpha > 0:
            raise ValueError("alpha must be > 0")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must be in [0, 1]")
        if self.gumbel_scale < 0:
            raise ValueError("gumbel_scale must be >= 0")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")


NORMALIZATION_TOL = 1e-9


@dataclass(frozen=True)
class LogDistribution:
    """Weights over candidate ids in natural-log space.

    When ``normalized`` the log-weights must satisfy logsumexp == 0 within
    1e-9.  Instances are immutable; the weights array is read-only.
    """

    ids: tuple[str, ...]
    logweights: np.ndarray = field(repr=False)
    normalized: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "ids", tuple(self.ids))
        arr = np.asarray(self.logweights, dtype=np.float64).copy()
        arr.flags.writeable = False
        object.__setattr__(self, "logweights", arr)
        if len(self.ids) != arr.size:
            raise ValueError("ids and logweights must have equal length")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("distribution ids must be distinct")
        if self.normalized:
            total = logsumexp(arr)
            if abs(total) > NORMALIZATION_TOL:
                raise ValueError(f"normalized distribution sums to exp({total}) != 1")

    @classmethod
    def from_scores(cls, ids, scores) -> "LogDistribution":
        """Normalized distribution from raw (finite) scores via log-softmax."""
        return cls(tuple(ids), log_softmax(scores), normalized=True)

    def probs(self) -> np.ndarray:
        return np.exp(self.logweights)

    def as_dict(self) -> dict[str, float]:
        return {cid: float(lw) for cid, lw in zip(self.ids, self.logweights)}

    def logweight(self, cid: str) -> float:
        return float(self.logweights[self.ids.index(cid)])

    def argmax_id(self, tie_order: dict[str, int] | None = None) -> str:
        """Id with the highest weight; ties by ascending ``tie_order`` rank,
        falling back to position in ``ids``."""
        best = None
        for pos, (cid, lw) in enumerate(zip(self.ids, self.logweights)):
            rank = tie_order[cid] if tie_order is not None else pos
            key = (-lw, rank)
            if best is None or key < best[0]:
                best = (key, cid)
        assert best is not None
        return best[1]


def sharpen(dist: LogDistribution, exponent: float) -> LogDistribution:
    """Raise a normalized distribution to a power and renormalize.

    exponent 1 is the identity; exponent 0 yields the uniform distribution
    (0 * -inf is treated as 0, the uniform limit).
    """
    if not dist.normalized:
        raise ValueError("sharpen requires a normalized distribution")
    if not math.isfinite(exponent):
        raise ValueError("exponent must be finite")
    if exponent == 1.0:
        return dist
    if exponent == 0.0:
        n = len(dist.ids)
        return LogDistribution(dist.ids, np.full(n, -math.log(n)), normalized=True)
    scaled = dist.logweights * exponent
    return LogDistribution(dist.ids, scaled - logsumexp(scaled), normalized=True)
