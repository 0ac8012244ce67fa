"""Relevance scoring, top-K selection, and Gumbel-perturbed selection.

Scores live in an ordered id -> score mapping whose iteration order is the
pool order; every tie in this module breaks by ascending pool index so
results are reproducible and oracle-checkable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import LogDistribution


@dataclass(frozen=True)
class ProjectionPair:
    """The two linear maps that score history/knowledge embedding pairs."""

    w_h: np.ndarray = field(repr=False)
    w_z: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        w_h = np.asarray(self.w_h, dtype=np.float64).copy()
        w_z = np.asarray(self.w_z, dtype=np.float64).copy()
        if w_h.ndim != 2 or w_z.ndim != 2 or w_h.shape != w_z.shape:
            raise ValueError(f"projections must share a 2-D shape, got {w_h.shape} and {w_z.shape}")
        if not (np.all(np.isfinite(w_h)) and np.all(np.isfinite(w_z))):
            raise ValueError("projection entries must be finite")
        w_h.flags.writeable = False
        w_z.flags.writeable = False
        object.__setattr__(self, "w_h", w_h)
        object.__setattr__(self, "w_z", w_z)

    @property
    def out_dim(self) -> int:
        return self.w_h.shape[0]

    @property
    def in_dim(self) -> int:
        return self.w_h.shape[1]

    @classmethod
    def identity(cls, dim: int) -> "ProjectionPair":
        eye = np.eye(dim)
        return cls(eye, eye)

    @classmethod
    def random_init(cls, dim: int, scale: float, seed: int) -> "ProjectionPair":
        rng = np.random.default_rng(seed)
        return cls(
            scale * rng.standard_normal((dim, dim)),
            scale * rng.standard_normal((dim, dim)),
        )

    def to_dict(self) -> dict:
        return {"w_h": self.w_h.tolist(), "w_z": self.w_z.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "ProjectionPair":
        return cls(np.asarray(data["w_h"]), np.asarray(data["w_z"]))


def relevance(h_vec: np.ndarray, z_vec: np.ndarray, proj: ProjectionPair) -> float:
    """Bilinear relevance score: (W_h h) . (W_z z)."""
    h_vec = np.asarray(h_vec, dtype=np.float64)
    z_vec = np.asarray(z_vec, dtype=np.float64)
    if h_vec.shape != (proj.in_dim,) or z_vec.shape != (proj.in_dim,):
        raise ValueError(
            f"expected vectors of length {proj.in_dim}, got {h_vec.shape} and {z_vec.shape}"
        )
    return float((proj.w_h @ h_vec) @ (proj.w_z @ z_vec))


def score_candidates(
    h_vec: np.ndarray, ids: list[str], z_vecs: list[np.ndarray], proj: ProjectionPair
) -> dict[str, float]:
    """Relevance of every candidate, keyed by id in pool order."""
    if len(ids) != len(z_vecs):
        raise ValueError("ids and vectors must have equal length")
    projected_h = proj.w_h @ np.asarray(h_vec, dtype=np.float64)
    return {
        cid: float(projected_h @ (proj.w_z @ np.asarray(vec, dtype=np.float64)))
        for cid, vec in zip(ids, z_vecs)
    }


@dataclass(frozen=True)
class SelectionResult:
    """Retained top-K ids (best first), their prior distribution, and the
    unperturbed scores kept for diagnostics."""

    retained: tuple[str, ...]
    prior: LogDistribution
    raw_scores: dict[str, float]

    def __post_init__(self) -> None:
        if tuple(self.prior.ids) != tuple(self.retained):
            raise ValueError("prior must range over the retained ids in order")


def top_k_select(scores: dict[str, float], k: int) -> SelectionResult:
    """Retain the min(k, n) highest-scoring ids and softmax their raw scores.

    Ties break by ascending pool index (the mapping's iteration order).
    """
    return _select(scores, k, effective=scores)


def gumbel_perturb(
    scores: dict[str, float], mu: float, phi: float, rng: np.random.Generator
) -> dict[str, float]:
    """Add an independent Gumbel(mu, phi) draw to each score.

    Draws use the inverse CDF ``mu - phi * ln(-ln(u))`` with u uniform on
    (0, 1) from the supplied stream.  ``phi == 0`` returns the scores
    unchanged without consuming randomness.
    """
    if phi < 0:
        raise ValueError("phi must be >= 0")
    if phi == 0.0:
        return dict(scores)
    u = rng.random(len(scores))
    u = np.maximum(u, 1e-300)  # u == 0.0 would give ln(0)
    noise = mu - phi * np.log(-np.log(u))
    return {cid: s + float(g) for (cid, s), g in zip(scores.items(), noise)}


def noisy_top_k(
    scores: dict[str, float],
    k: int,
    mu: float,
    phi: float,
    rng: np.random.Generator,
) -> SelectionResult:
    """Top-K over Gumbel-perturbed scores; the prior uses the perturbed scores
    too, so one consistent perturbed ranking drives both the cut and the
    softmax.  ``raw_scores`` keeps the unperturbed input."""
    perturbed = gumbel_perturb(scores, mu, phi, rng)
    return _select(scores, k, effective=perturbed)


def _select(
    raw: dict[str, float], k: int, effective: dict[str, float]
) -> SelectionResult:
    if not raw:
        raise ValueError("cannot select from an empty score map")
    if k < 1:
        raise ValueError("k must be >= 1")
    for value in effective.values():
        if not math.isfinite(value):
            raise ValueError("scores must be finite")
    order = sorted(
        enumerate(effective.items()), key=lambda item: (-item[1][1], item[0])
    )
    retained = tuple(cid for _, (cid, _) in order[: min(k, len(order))])
    prior = LogDistribution.from_scores(retained, [effective[cid] for cid in retained])
    return SelectionResult(retained=retained, prior=prior, raw_scores=dict(raw))
