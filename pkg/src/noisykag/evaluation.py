"""End-to-end evaluation runs, grid search, ablation, and the noisy-training
A/B benchmark.

Reports are plain JSON-serializable dicts written with sorted keys, so a
re-run with identical inputs, configuration, and seed is byte-identical.
Gold knowledge ids are consulted only inside metric computation.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .backends import (
    CachingEncoder,
    CachingGenerator,
    EmbeddingBackend,
    GeneratorBackend,
    RemoteBackendError,
    RemoteEncoder,
    RemoteGenerator,
    ToyEncoder,
    ToyEncoderConfig,
    ToyGenerator,
    ToyGeneratorConfig,
)
from .core import CandidatePool, HyperParams, LogDistribution, normalize_text
from .data import DatasetRecord
from .inference import marginal_response_logprob, respond
from .metrics import knowledge_f1, p_at_k, pooled_perplexity, unigram_f1
from .selector import ProjectionPair, top_k_select, score_candidates
from .synth import make_distractors, record_to_train_example
from .training import TrainConfig, load_projections, train

REPORT_SCHEMA_VERSION = "1"


class ConfigError(Exception):
    """Invalid run configuration."""


class Mode(str, Enum):
    BASELINE = "baseline"
    NOISY_TRAIN = "noisy_train"
    REWEIGH_POSTERIOR = "reweigh_posterior"


class BackendKind(str, Enum):
    TOY = "toy"
    REMOTE = "remote"


class MissingG(str, Enum):
    ERROR = "error"
    PRIOR = "prior"


def default_corpus_path() -> Path:
    return Path(str(resources.files("noisykag.resources") / "corpus.txt"))


@dataclass(frozen=True)
class ToySettings:
    encoder_dim: int = 32
    hash_seed: int = 0
    corpus_path: str | None = None
    lambda_copy: float = 0.7
    lambda_bigram: float = 0.2
    lambda_uniform: float = 0.1
    max_len: int = 10


@dataclass(frozen=True)
class RemoteSettings:
    endpoint: str | None = None
    timeout: float = 10.0
    retries: int = 2
    bearer_token: str | None = None
    max_len: int = 32


@dataclass(frozen=True)
class RunConfig:
    hyper: HyperParams = field(default_factory=HyperParams)
    mode: Mode = Mode.BASELINE
    backend: BackendKind = BackendKind.TOY
    missing_g: MissingG = MissingG.ERROR
    toy: ToySettings = field(default_factory=ToySettings)
    remote: RemoteSettings = field(default_factory=RemoteSettings)
    train: TrainConfig = field(default_factory=TrainConfig)
    projections_path: str | None = None
    jobs: int = 1

    def __post_init__(self) -> None:
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")

    def echo(self) -> dict:
        """Configuration as a JSON-ready dict, embedded in every report."""
        return {
            "hyper": {
                "k": self.hyper.k,
                "alpha": self.hyper.alpha,
                "beta": self.hyper.beta,
                "gumbel_scale": self.hyper.gumbel_scale,
                "gumbel_location": self.hyper.gumbel_location,
                "seed": self.hyper.seed,
            },
            "mode": self.mode.value,
            "backend": self.backend.value,
            "missing_g": self.missing_g.value,
            "toy": {
                "encoder_dim": self.toy.encoder_dim,
                "hash_seed": self.toy.hash_seed,
                "corpus_path": self.toy.corpus_path,
                "lambda_copy": self.toy.lambda_copy,
                "lambda_bigram": self.toy.lambda_bigram,
                "lambda_uniform": self.toy.lambda_uniform,
                "max_len": self.toy.max_len,
            },
            "train": {
                "learning_rate": self.train.learning_rate,
                "epochs": self.train.epochs,
                "k": self.train.k,
                "noisy": self.train.noisy,
                "init_scale": self.train.init_scale,
            },
            "projections_path": self.projections_path,
            "jobs": self.jobs,
        }


def config_from_dict(data: dict) -> RunConfig:
    """Build a RunConfig from decoded JSON, rejecting unknown keys."""

    def sub(cls, obj, label):
        if not isinstance(obj, dict):
            raise ConfigError(f"'{label}' must be an object")
        import dataclasses

        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"'{label}' has unknown keys: {sorted(unknown)}")
        try:
            return cls(**obj)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid '{label}': {exc}") from exc

    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    known = {"hyper", "mode", "backend", "missing_g", "toy", "remote", "train",
             "projections_path", "jobs"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"config has unknown keys: {sorted(unknown)}")
    kwargs: dict = {}
    if "hyper" in data:
        kwargs["hyper"] = sub(HyperParams, data["hyper"], "hyper")
    if "toy" in data:
        kwargs["toy"] = sub(ToySettings, data["toy"], "toy")
    if "remote" in data:
        kwargs["remote"] = sub(RemoteSettings, data["remote"], "remote")
    if "train" in data:
        tr = dict(data["train"])
        hyper = kwargs.get("hyper", HyperParams())
        tr.setdefault("k", hyper.k)
        kwargs["train"] = sub(TrainConfig, {**tr, "hyper": hyper}, "train")
    for name, enum_cls in (("mode", Mode), ("backend", BackendKind), ("missing_g", MissingG)):
        if name in data:
            try:
                kwargs[name] = enum_cls(data[name])
            except ValueError as exc:
                raise ConfigError(f"invalid '{name}': {exc}") from exc
    for name in ("projections_path", "jobs"):
        if name in data:
            kwargs[name] = data[name]
    try:
        return RunConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc


def build_backends(config: RunConfig) -> tuple[EmbeddingBackend, GeneratorBackend]:
    """Backends per the config, wrapped in per-run caches."""
    if config.backend is BackendKind.TOY:
        toy = config.toy
        corpus = Path(toy.corpus_path) if toy.corpus_path else default_corpus_path()
        encoder: EmbeddingBackend = ToyEncoder(ToyEncoderConfig(toy.encoder_dim, toy.hash_seed))
        generator: GeneratorBackend = ToyGenerator(
            ToyGeneratorConfig(
                corpus_path=corpus,
                lambda_copy=toy.lambda_copy,
                lambda_bigram=toy.lambda_bigram,
                lambda_uniform=toy.lambda_uniform,
                max_len=toy.max_len,
            )
        )
    else:
        remote = config.remote
        try:
            encoder = RemoteEncoder(
                remote.endpoint, timeout=remote.timeout, retries=remote.retries,
                bearer_token=remote.bearer_token,
            )
            generator = RemoteGenerator(
                remote.endpoint, max_len=remote.max_len, timeout=remote.timeout,
                retries=remote.retries, bearer_token=remote.bearer_token,
            )
        except RemoteBackendError as exc:
            raise ConfigError(str(exc)) from exc
    return CachingEncoder(encoder), CachingGenerator(generator)


def resolve_projections(config: RunConfig, encoder: EmbeddingBackend) -> ProjectionPair:
    if config.projections_path:
        return load_projections(config.projections_path)
    return ProjectionPair.identity(encoder.dim)


def full_ranking(
    dist: LogDistribution, raw_scores: dict[str, float], pool: CandidatePool
) -> list[str]:
    """Every pool id: retained ids by distribution weight, then the rest by
    raw relevance score; all ties break by ascending pool index."""
    pool_order = {c.id: i for i, c in enumerate(pool.candidates)}
    weights = dist.as_dict()
    retained = sorted(dist.ids, key=lambda cid: (-weights[cid], pool_order[cid]))
    rest = sorted(
        (cid for cid in raw_scores if cid not in weights),
        key=lambda cid: (-raw_scores[cid], pool_order[cid]),
    )
    return [*retained, *rest]


def _evaluate_record(
    record: DatasetRecord,
    config: RunConfig,
    encoder: EmbeddingBackend,
    generator: GeneratorBackend,
    proj: ProjectionPair,
) -> dict:
    hyper = config.hyper
    reference_tokens = tuple(normalize_text(record.reference_response))

    if config.mode is Mode.REWEIGH_POSTERIOR:
        g = record.generated_knowledge
        if g is None and config.missing_g is MissingG.ERROR:
            raise ValueError(
                "record has no generated_knowledge (configure missing_g='prior' to fall back)"
            )
        trace = respond(record.history, record.candidates, g, proj, encoder, generator, hyper)
        selection_dist = trace.posterior
        raw_scores = trace.raw_scores
        response = trace.final_response
        final_id = trace.final_id
        trace_summary = {
            "final_id": trace.final_id,
            "retained": list(trace.retained),
            "posterior": {
                cid: float(p) for cid, p in zip(trace.posterior.ids, trace.posterior.probs())
            },
            "likelihoods": {cid: float(v) for cid, v in trace.likelihoods.items()},
        }
    else:
        # prior-argmax path: no similarity, no likelihood reweighing
        h_vec = encoder.embed(record.history.flat_text())
        ids = [c.id for c in record.candidates.candidates]
        z_vecs = [encoder.embed(c.text) for c in record.candidates.candidates]
        scores = score_candidates(h_vec, ids, z_vecs, proj)
        selection = top_k_select(scores, hyper.k)
        pool_order = {cid: i for i, cid in enumerate(ids)}
        final_id = selection.prior.argmax_id(tie_order=pool_order)
        response = generator.greedy(record.history, record.candidates.by_id(final_id), None)
        selection_dist = selection.prior
        raw_scores = selection.raw_scores
        trace_summary = {
            "final_id": final_id,
            "retained": list(selection.retained),
            "prior": {
                cid: float(p) for cid, p in zip(selection.prior.ids, selection.prior.probs())
            },
        }

    ranking = full_ranking(selection_dist, raw_scores, record.candidates)
    seq_logliks = {
        cid: float(sum(generator.score_tokens(record.history, record.candidates.by_id(cid), reference_tokens)))
        for cid in selection_dist.ids
    }
    marginal_logprob = marginal_response_logprob(selection_dist, seq_logliks)

    response_text = response.text()
    entry: dict = {
        "id": record.id,
        "response": response_text,
        "unigram_f1": unigram_f1(response_text, record.reference_response).f1,
        "marginal_logprob": marginal_logprob,
        "reference_token_count": len(reference_tokens),
        "trace": trace_summary,
        "ranking": ranking,
    }
    gold = record.gold_knowledge_id
    if gold is not None:
        entry["p_at_1"] = p_at_k(ranking, gold, 1)
        entry["p_at_k"] = p_at_k(ranking, gold, hyper.k)
        entry["knowledge_f1"] = knowledge_f1(
            response_text, record.candidates.by_id(gold).text
        ).f1
    else:
        entry["p_at_1"] = None
        entry["p_at_k"] = None
        entry["knowledge_f1"] = None
    return entry


def _corpus_from_entries(entries: list[dict], k: int) -> dict:
    golds = [e for e in entries if e["p_at_1"] is not None]
    corpus: dict = {
        "n_records": len(entries),
        "k": k,
        "unigram_f1": float(np.mean([e["unigram_f1"] for e in entries])) if entries else None,
        "p_at_1": float(np.mean([e["p_at_1"] for e in golds])) if golds else None,
        "p_at_k": float(np.mean([e["p_at_k"] for e in golds])) if golds else None,
        "knowledge_f1": float(np.mean([e["knowledge_f1"] for e in golds])) if golds else None,
    }
    if entries:
        total_lp = [e["marginal_logprob"] for e in entries]
        counts = [e["reference_token_count"] for e in entries]
        corpus["ppl"] = pooled_perplexity(total_lp, counts)
        corpus["marginal_nll_per_token"] = -float(sum(total_lp)) / float(sum(counts))
    else:
        corpus["ppl"] = None
        corpus["marginal_nll_per_token"] = None
    return corpus


def run_eval(
    records: list[DatasetRecord],
    config: RunConfig,
    encoder: EmbeddingBackend,
    generator: GeneratorBackend,
    proj: ProjectionPair | None = None,
) -> dict:
    """Evaluate every record under the configured mode.

    Per-record failures are recorded and the run continues; the report's
    ``failures`` list is what drives the CLI's nonzero exit.
    """
    proj = proj if proj is not None else resolve_projections(config, encoder)

    def work(item: tuple[int, DatasetRecord]):
        _, record = item
        try:
            return _evaluate_record(record, config, encoder, generator, proj), None
        except Exception as exc:
            return None, {"id": record.id, "error": f"{type(exc).__name__}: {exc}"}

    items = list(enumerate(records))
    if config.jobs > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            results = list(pool.map(work, items))
    else:
        results = [work(item) for item in items]

    entries = sorted((e for e, _ in results if e is not None), key=lambda e: e["id"])
    failures = sorted((f for _, f in results if f is not None), key=lambda f: f["id"])
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "tool_version": __version__,
        "kind": "eval",
        "mode": config.mode.value,
        "seed": config.hyper.seed,
        "config": config.echo(),
        "corpus": _corpus_from_entries(entries, config.hyper.k),
        "per_example": entries,
        "failures": failures,
    }


def grid_search(
    records: list[DatasetRecord],
    alpha_grid: list[float],
    beta_grid: list[float],
    config: RunConfig,
    encoder: EmbeddingBackend,
    generator: GeneratorBackend,
    proj: ProjectionPair | None = None,
) -> dict:
    """Evaluate the reweigh-posterior mode at every (alpha, beta) grid point
    and pick the corpus unigram-F1 argmax (ties: lower alpha, then beta)."""
    if not alpha_grid or not beta_grid:
        raise ConfigError("alpha and beta grids must be non-empty")
    proj = proj if proj is not None else resolve_projections(config, encoder)
    points = []
    for alpha in alpha_grid:
        for beta in beta_grid:
            point_config = replace(
                config,
                mode=Mode.REWEIGH_POSTERIOR,
                hyper=replace(config.hyper, alpha=alpha, beta=beta),
            )
            report = run_eval(records, point_config, encoder, generator, proj)
            if report["failures"]:
                raise RuntimeError(
                    f"grid point alpha={alpha} beta={beta} had record failures: "
                    f"{report['failures'][:3]}"
                )
            points.append(
                {
                    "alpha": alpha,
                    "beta": beta,
                    "unigram_f1": report["corpus"]["unigram_f1"],
                    "knowledge_f1": report["corpus"]["knowledge_f1"],
                    "p_at_1": report["corpus"]["p_at_1"],
                }
            )
    best = max(points, key=lambda p: (p["unigram_f1"], -p["alpha"], -p["beta"]))
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "tool_version": __version__,
        "kind": "grid",
        "seed": config.hyper.seed,
        "config": config.echo(),
        "alpha_grid": list(alpha_grid),
        "beta_grid": list(beta_grid),
        "points": points,
        "best": {"alpha": best["alpha"], "beta": best["beta"], "unigram_f1": best["unigram_f1"]},
    }


DEFAULT_ALPHA_GRID = [float(a) for a in range(1, 11)]
DEFAULT_BETA_GRID = [round(0.1 * b, 1) for b in range(1, 10)]


def _train_projections(
    train_records: list[DatasetRecord],
    config: RunConfig,
    encoder: EmbeddingBackend,
    generator: GeneratorBackend,
    noisy: bool,
):
    examples = [record_to_train_example(r) for r in train_records]
    train_config = replace(config.train, noisy=noisy, hyper=config.hyper)
    return train(examples, train_config, encoder, generator)


def ablation(
    eval_records: list[DatasetRecord],
    train_records: list[DatasetRecord],
    config: RunConfig,
    encoder: EmbeddingBackend,
    generator: GeneratorBackend,
) -> dict:
    """Three cumulative systems: clean-trained baseline, noisy-trained
    selector, and noisy-trained selector plus posterior reweighing."""
    if any(r.generated_knowledge is None for r in eval_records):
        if config.missing_g is MissingG.ERROR:
            raise ConfigError(
                "ablation requires generated_knowledge on every eval record "
                "(or missing_g='prior')"
            )
    clean = _train_projections(train_records, config, encoder, generator, noisy=False)
    noisy = _train_projections(train_records, config, encoder, generator, noisy=True)

    rows = []
    for label, proj, mode in (
        ("baseline", clean.final_projections, Mode.BASELINE),
        ("+ noisy training", noisy.final_projections, Mode.BASELINE),
        ("+ posterior reweighing", noisy.final_projections, Mode.REWEIGH_POSTERIOR),
    ):
        report = run_eval(
            eval_records, replace(config, mode=mode), encoder, generator, proj
        )
        if report["failures"]:
            raise RuntimeError(f"ablation row {label!r} had record failures")
        rows.append(
            {
                "system": label,
                "unigram_f1": report["corpus"]["unigram_f1"],
                "knowledge_f1": report["corpus"]["knowledge_f1"],
                "p_at_1": report["corpus"]["p_at_1"],
                "p_at_k": report["corpus"]["p_at_k"],
            }
        )
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "tool_version": __version__,
        "kind": "ablation",
        "seed": config.hyper.seed,
        "config": config.echo(),
        "rows": rows,
    }


def render_ablation_table(report: dict) -> str:
    headers = ["system", "unigram_f1", "knowledge_f1", "p_at_1", "p_at_k"]
    rows = [
        [row["system"]] + [f"{row[h]:.4f}" for h in headers[1:]]
        for row in report["rows"]
    ]
    widths = [max(len(h), *(len(r[i]) for r in rows)) for i, h in enumerate(headers)]
    lines = [
        "  ".join(h.ljust(w) for h, w in zip(headers, widths)),
        "  ".join("-" * w for w in widths),
    ]
    lines += ["  ".join(c.ljust(w) for c, w in zip(r, widths)) for r in rows]
    return "\n".join(lines)


def render_grid_table(report: dict) -> str:
    lines = ["alpha  beta  unigram_f1", "-----  ----  ----------"]
    for p in report["points"]:
        lines.append(f"{p['alpha']:<5g}  {p['beta']:<4g}  {p['unigram_f1']:.6f}")
    best = report["best"]
    lines.append(f"best: alpha={best['alpha']:g} beta={best['beta']:g} "
                 f"unigram_f1={best['unigram_f1']:.6f}")
    return "\n".join(lines)


def perturb_records(
    records: list[DatasetRecord], seed: int, n_distractors: int = 2
) -> list[DatasetRecord]:
    """Copy of the dataset with history-token distractors injected into every
    pool (gold ids unchanged); streams split per record from the seed."""
    out = []
    for idx, rec in enumerate(records):
        rng = np.random.default_rng([seed, 7177, idx])
        distractors = make_distractors(rec.history, n_distractors, rng, f"{rec.id}-x")
        pool = CandidatePool(
            rec.candidates.candidates + tuple(distractors), rec.candidates.gold_id
        )
        out.append(
            DatasetRecord(
                id=rec.id,
                history=rec.history,
                candidates=pool,
                generated_knowledge=rec.generated_knowledge,
                reference_response=rec.reference_response,
            )
        )
    return out


def perturbation_benchmark(
    train_records: list[DatasetRecord],
    test_records: list[DatasetRecord],
    config: RunConfig,
    encoder: EmbeddingBackend,
    generator: GeneratorBackend,
) -> dict:
    """Train clean and Gumbel-noisy selectors from one seed, then compare
    them on the test set and on a distractor-injected copy of it.

    Emits P@K and per-token marginal NLL for all four cells; the noisy-minus-
    clean direction is reported, never asserted.
    """
    if config.backend is not BackendKind.TOY:
        raise ConfigError("the perturbation benchmark requires toy backends")
    clean = _train_projections(train_records, config, encoder, generator, noisy=False)
    noisy = _train_projections(train_records, config, encoder, generator, noisy=True)
    perturbed = perturb_records(test_records, config.hyper.seed)

    base_config = replace(config, mode=Mode.BASELINE)
    cells = {}
    for selector_label, report_obj in (("clean", clean), ("noisy", noisy)):
        for test_label, dataset in (("original", test_records), ("perturbed", perturbed)):
            report = run_eval(dataset, base_config, encoder, generator, report_obj.final_projections)
            if report["failures"]:
                raise RuntimeError(
                    f"perturbation cell {selector_label}/{test_label} had record failures"
                )
            cells[f"{selector_label}_selector/{test_label}_test"] = {
                "p_at_k": report["corpus"]["p_at_k"],
                "marginal_nll_per_token": report["corpus"]["marginal_nll_per_token"],
            }
    delta = {
        "perturbed_p_at_k_noisy_minus_clean": cells["noisy_selector/perturbed_test"]["p_at_k"]
        - cells["clean_selector/perturbed_test"]["p_at_k"],
        "perturbed_nll_noisy_minus_clean": cells["noisy_selector/perturbed_test"][
            "marginal_nll_per_token"
        ]
        - cells["clean_selector/perturbed_test"]["marginal_nll_per_token"],
    }
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "tool_version": __version__,
        "kind": "perturbation_benchmark",
        "seed": config.hyper.seed,
        "config": config.echo(),
        "cells": cells,
        "delta": delta,
        "train_nll": {
            "clean": list(clean.per_epoch_nll[:: max(1, len(clean.per_epoch_nll) // 10)]),
            "noisy": list(noisy.per_epoch_nll[:: max(1, len(noisy.per_epoch_nll) // 10)]),
        },
    }


def write_report(report: dict, path: str | Path) -> None:
    Path(path).write_text(report_json(report), encoding="utf-8")


def report_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True, ensure_ascii=False) + "\n"
