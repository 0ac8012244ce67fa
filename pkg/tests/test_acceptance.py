"""Acceptance suite: one test per exit criterion, each printing a PASS/FAIL
line, with every tolerance pinned inline.

Golden files under tests/golden/ freeze the reference training curve and the
perturbation benchmark report; regenerate them with scripts/make_goldens.py
only after an intentional change to fixtures or the toy backends.
"""

import dataclasses
import functools
import itertools
import json
import math
import time
from pathlib import Path

import numpy as np

from noisykag.core import (
    HyperParams,
    LogDistribution,
    Response,
    log_softmax,
    sharpen,
)
from noisykag.backends import ToyEncoder, ToyEncoderConfig, ToyGenerator, ToyGeneratorConfig
from noisykag.data import load_dataset
from noisykag.evaluation import (
    DEFAULT_ALPHA_GRID,
    DEFAULT_BETA_GRID,
    Mode,
    RunConfig,
    ablation,
    build_backends,
    default_corpus_path,
    grid_search,
    perturbation_benchmark,
    report_json,
    run_eval,
)
from noisykag.inference import (
    marginal_response_logprob,
    mean_token_prob,
    posterior,
    refine,
    respond,
)
from noisykag.metrics import fleiss_kappa, LabelMatrix, perplexity, unigram_f1
from noisykag.selector import ProjectionPair, noisy_top_k
from noisykag.synth import make_records, record_to_train_example
from noisykag.training import TrainConfig, finite_diff_check, grad_scores, train

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"
GOLDEN = Path(__file__).resolve().parent / "golden"


def criterion(number, label):
    def decorate(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            try:
                fn(*args, **kwargs)
            except BaseException:
                print(f"[acceptance] criterion {number} ({label}): FAIL")
                raise
            print(f"[acceptance] criterion {number} ({label}): PASS")

        return wrapper

    return decorate


def reference_train_config() -> TrainConfig:
    return TrainConfig(
        learning_rate=0.05, epochs=200, k=4, noisy=False,
        hyper=HyperParams(seed=42), init_scale=1.0,
    )


@criterion(1, "distribution suite")
def test_distribution_suite():
    start = time.time()
    rng = np.random.default_rng(42)
    for _ in range(1000):
        n = int(rng.integers(1, 10))
        logits = rng.normal(scale=5.0, size=n)
        out = log_softmax(logits)
        assert abs(np.exp(out).sum() - 1.0) < 1e-9
        shift = log_softmax(logits + float(rng.normal(scale=50.0)))
        np.testing.assert_allclose(out, shift, atol=1e-9)
        dist = LogDistribution(tuple(f"c{i}" for i in range(n)), out)
        identity = sharpen(dist, 1.0)
        np.testing.assert_array_equal(identity.logweights, dist.logweights)
        uniform = sharpen(dist, 0.0)
        np.testing.assert_allclose(uniform.probs(), np.full(n, 1.0 / n), atol=1e-9)
        assert abs(np.exp(sharpen(dist, float(rng.uniform(0, 1))).logweights).sum() - 1.0) < 1e-9
    # distributions produced by the full inference path normalize too
    records = load_dataset(FIXTURES / "eval.jsonl")[:5]
    config = RunConfig(hyper=HyperParams(seed=42))
    encoder, generator = build_backends(config)
    for record in records:
        trace = respond(
            record.history, record.candidates, record.generated_knowledge,
            ProjectionPair.identity(encoder.dim), encoder, generator, config.hyper,
        )
        for d in (trace.prior, trace.similarity, trace.refined, trace.posterior):
            assert abs(np.exp(d.logweights).sum() - 1.0) < 1e-9
    elapsed = time.time() - start
    assert elapsed < 5.0, f"distribution suite took {elapsed:.1f}s"


@criterion(2, "Gumbel-max / Gumbel-TopK")
def test_gumbel_top_k_frequencies():
    start = time.time()
    scores = {f"c{i}": math.log(i + 1) for i in range(4)}
    softmax = [0.1, 0.2, 0.3, 0.4]
    rng = np.random.default_rng(42)

    n = 100_000
    counts_k1 = {cid: 0 for cid in scores}
    for _ in range(n):
        counts_k1[noisy_top_k(scores, 1, 0.0, 1.0, rng).retained[0]] += 1
    for i, expected in enumerate(softmax):
        assert abs(counts_k1[f"c{i}"] / n - expected) < 0.01

    pl = {
        (f"c{i}", f"c{j}"): softmax[i] * softmax[j] / (1.0 - softmax[i])
        for i, j in itertools.permutations(range(4), 2)
    }
    counts_k2 = {pair: 0 for pair in pl}
    for _ in range(n):
        retained = noisy_top_k(scores, 2, 0.0, 1.0, rng).retained
        counts_k2[(retained[0], retained[1])] += 1
    for pair, expected in pl.items():
        assert abs(counts_k2[pair] / n - expected) < 0.02
    elapsed = time.time() - start
    assert elapsed < 30.0, f"Gumbel suite took {elapsed:.1f}s"


@criterion(3, "Bayes consistency vs joint enumeration")
def test_bayes_consistency_enumeration():
    start = time.time()
    rng = np.random.default_rng(42)
    eos = "t0"
    max_len = 3

    def leaves(vocab, prefix=()):
        if prefix and prefix[-1] == eos:
            return [prefix]
        if len(prefix) == max_len:
            return [prefix]
        out = []
        for tok in vocab:
            out.extend(leaves(vocab, prefix + (tok,)))
        return out

    for _ in range(200):
        n_z = int(rng.integers(1, 5))
        v = int(rng.integers(2, 7))
        vocab = tuple(f"t{i}" for i in range(v))
        ids = [f"z{i}" for i in range(n_z)]
        sequences = leaves(vocab)
        models = {
            zid: [dict(zip(vocab, rng.dirichlet(np.ones(v)))) for _ in range(max_len)]
            for zid in ids
        }

        def seq_prob(zid, seq):
            p = 1.0
            for i, tok in enumerate(seq):
                p *= models[zid][i][tok]
            return p

        refined = LogDistribution(tuple(ids), np.log(rng.dirichlet(np.ones(n_z))))
        observed = sequences[int(rng.integers(len(sequences)))]
        result = posterior(
            refined, {zid: seq_prob(zid, observed) + 1e-300 for zid in ids}, beta=1.0
        )
        refined_probs = refined.probs()
        joint_column = np.array(
            [refined_probs[i] * seq_prob(zid, observed) for i, zid in enumerate(ids)]
        )
        oracle = joint_column / joint_column.sum()
        np.testing.assert_allclose(result.probs(), oracle, atol=1e-9)
    elapsed = time.time() - start
    assert elapsed < 60.0, f"Bayes suite took {elapsed:.1f}s"


@criterion(4, "hand-value suite")
def test_hand_values():
    # log-softmax of [ln 2, 0]
    np.testing.assert_allclose(
        np.exp(log_softmax([math.log(2), 0.0])), [2 / 3, 1 / 3], atol=1e-9
    )
    # refined distribution: uniform prior x [0.8, 0.2] similarity
    refined = refine(
        LogDistribution(("a", "b"), np.log([0.5, 0.5])),
        LogDistribution(("a", "b"), np.log([0.8, 0.2])),
    )
    np.testing.assert_allclose(refined.probs(), [0.8, 0.2], atol=1e-9)
    # posterior of refined [0.8, 0.2] with likelihoods [0.4, 0.1]
    post = posterior(
        LogDistribution(("a", "b"), np.log([0.8, 0.2])), {"a": 0.4, "b": 0.1}, beta=1.0
    )
    np.testing.assert_allclose(post.probs(), [0.941, 0.059], atol=1e-3)
    post_half = posterior(
        LogDistribution(("a", "b"), np.log([0.8, 0.2])), {"a": 0.4, "b": 0.1}, beta=0.5
    )
    np.testing.assert_allclose(post_half.probs(), [0.800, 0.200], atol=1e-3)
    # mean token probability of [ln 0.9, ln 0.1]
    resp = Response(("x", "y"), (math.log(0.9), math.log(0.1)))
    assert abs(mean_token_prob(resp) - 0.5) < 1e-9
    # marginal mixture ln 0.25
    marginal = marginal_response_logprob(
        LogDistribution(("a", "b"), np.log([0.5, 0.5])),
        {"a": math.log(0.4), "b": math.log(0.1)},
    )
    assert abs(marginal - math.log(0.25)) < 1e-9
    # unigram F1 of "a b c" vs "a b d"
    assert abs(unigram_f1("a b c", "a b d").f1 - 2 / 3) < 1e-9
    # Fleiss' kappa -1/3 on the 2-1 split design
    kappa = fleiss_kappa(LabelMatrix(np.array([[2, 1]] * 5 + [[1, 2]] * 5), raters=3))
    assert abs(kappa - (-1 / 3)) < 1e-9
    # perplexity 2.828 on per-token logprobs averaging 1.5 bits
    assert abs(perplexity(math.log(0.5) + math.log(0.25), 2) - 2.828) < 1e-3
    # gradient [-0.3, +0.3] from uniform prior and likelihoods [0.4, 0.1]
    prior = LogDistribution(("a", "b"), np.log([0.5, 0.5]))
    train_post = LogDistribution(("a", "b"), np.log([0.8, 0.2]))
    grads = grad_scores(prior, train_post)
    assert abs(grads["a"] - (-0.3)) < 1e-9 and abs(grads["b"] - 0.3) < 1e-9


@criterion(5, "finite-difference gradient oracle")
def test_gradient_oracle_50_random_steps():
    start = time.time()
    encoder = ToyEncoder(ToyEncoderConfig(dim=16, hash_seed=0))
    generator = ToyGenerator(ToyGeneratorConfig(corpus_path=default_corpus_path()))
    records = make_records(50, seed=77, id_prefix="fdacc")
    worst = 0.0
    for i, record in enumerate(records):
        example = record_to_train_example(record)
        proj = ProjectionPair.random_init(16, 1.0, seed=1000 + i)
        worst = max(worst, finite_diff_check(example, proj, encoder, generator, k=3))
    assert worst <= 1e-4, f"worst relative error {worst:.3e}"
    elapsed = time.time() - start
    assert elapsed < 60.0, f"gradient oracle took {elapsed:.1f}s"


@criterion(6, "training reduces NLL and matches the golden curve")
def test_training_golden_curve():
    start = time.time()
    config = RunConfig(hyper=HyperParams(seed=42), train=reference_train_config())
    encoder, generator = build_backends(config)
    examples = [
        record_to_train_example(r) for r in load_dataset(FIXTURES / "train.jsonl")
    ]
    assert len(examples) == 200
    report = train(examples, reference_train_config(), encoder, generator)
    curve = list(report.per_epoch_nll)
    assert curve[-1] <= 0.8 * curve[0], (
        f"NLL only moved {curve[0]:.4f} -> {curve[-1]:.4f}"
    )
    golden = json.loads((GOLDEN / "train_curve.json").read_text(encoding="utf-8"))
    assert golden["per_epoch_nll"] == curve, "loss curve deviates from the golden file"
    elapsed = time.time() - start
    assert elapsed < 120.0, f"training took {elapsed:.1f}s"


class TestEndToEndByteIdentical:
    """Criterion 7: every driver re-runs byte-identically on the fixtures."""

    def _run_twice(self, fn):
        blobs, durations = [], []
        for _ in range(2):
            start = time.time()
            blobs.append(fn())
            durations.append(time.time() - start)
        assert blobs[0] == blobs[1], "re-run with the same seed is not byte-identical"
        assert max(durations) < 60.0, f"run took {max(durations):.1f}s"

    @criterion(7, "end-to-end eval byte-identical")
    def test_eval(self):
        records = load_dataset(FIXTURES / "eval.jsonl")
        config = RunConfig(hyper=HyperParams(seed=42), mode=Mode.REWEIGH_POSTERIOR)

        def once():
            encoder, generator = build_backends(config)
            report = run_eval(records, config, encoder, generator)
            assert not report["failures"]
            return report_json(report)

        self._run_twice(once)

    @criterion(7, "end-to-end grid 10x9 byte-identical")
    def test_grid(self):
        records = load_dataset(FIXTURES / "valid.jsonl")
        config = RunConfig(hyper=HyperParams(seed=42))
        assert len(DEFAULT_ALPHA_GRID) == 10 and len(DEFAULT_BETA_GRID) == 9

        def once():
            encoder, generator = build_backends(config)
            report = grid_search(
                records, DEFAULT_ALPHA_GRID, DEFAULT_BETA_GRID, config, encoder, generator
            )
            assert len(report["points"]) == 90
            return report_json(report)

        self._run_twice(once)

    @criterion(7, "end-to-end ablation byte-identical, phi=0 rows coincide")
    def test_ablate(self):
        eval_records = load_dataset(FIXTURES / "eval.jsonl")
        train_records = load_dataset(FIXTURES / "train.jsonl")
        config = RunConfig(hyper=HyperParams(seed=42), train=reference_train_config())

        def once():
            encoder, generator = build_backends(config)
            return report_json(
                ablation(eval_records, train_records, config, encoder, generator)
            )

        self._run_twice(once)

        # phi = 0 collapses noisy training onto clean training
        zero_hyper = HyperParams(seed=42, gumbel_scale=0.0)
        zero_config = RunConfig(
            hyper=zero_hyper,
            train=dataclasses.replace(reference_train_config(), epochs=5, hyper=zero_hyper),
        )
        encoder, generator = build_backends(zero_config)
        report = ablation(
            eval_records[:30], train_records[:40], zero_config, encoder, generator
        )
        rows = report["rows"]
        for key in ("unigram_f1", "knowledge_f1", "p_at_1", "p_at_k"):
            assert rows[0][key] == rows[1][key]

    @criterion(7, "end-to-end perturbation benchmark byte-identical")
    def test_perturb(self):
        eval_records = load_dataset(FIXTURES / "eval.jsonl")
        train_records = load_dataset(FIXTURES / "train.jsonl")
        config = RunConfig(hyper=HyperParams(seed=42), train=reference_train_config())

        def once():
            encoder, generator = build_backends(config)
            return report_json(
                perturbation_benchmark(train_records, eval_records, config, encoder, generator)
            )

        self._run_twice(once)


@criterion(8, "unsupervised contract")
def test_gold_labels_never_influence_computation():
    records = load_dataset(FIXTURES / "eval.jsonl")[:20]
    config = RunConfig(hyper=HyperParams(seed=42), mode=Mode.REWEIGH_POSTERIOR)
    encoder, generator = build_backends(config)

    def variants(record):
        pool = record.candidates
        permuted_gold = pool.candidates[-1].id  # move gold to another candidate
        yield dataclasses.replace(record, candidates=dataclasses.replace(pool, gold_id=permuted_gold))
        yield dataclasses.replace(record, candidates=dataclasses.replace(pool, gold_id=None))

    base = run_eval(records, config, encoder, generator)
    for mutate in (0, 1):
        mutated_records = [list(variants(r))[mutate] for r in records]
        mutated = run_eval(mutated_records, config, encoder, generator)
        for a, b in zip(base["per_example"], mutated["per_example"]):
            assert a["response"] == b["response"]
            assert a["trace"] == b["trace"]
            assert a["ranking"] == b["ranking"]
            assert a["marginal_logprob"] == b["marginal_logprob"]

    # trained parameters ignore gold ids as well
    train_records = load_dataset(FIXTURES / "train.jsonl")[:30]
    stripped = [
        dataclasses.replace(r, candidates=dataclasses.replace(r.candidates, gold_id=None))
        for r in train_records
    ]
    short = dataclasses.replace(reference_train_config(), epochs=5)
    with_gold = train(
        [record_to_train_example(r) for r in train_records], short, encoder, generator
    )
    without_gold = train(
        [record_to_train_example(r) for r in stripped], short, encoder, generator
    )
    np.testing.assert_array_equal(
        with_gold.final_projections.w_h, without_gold.final_projections.w_h
    )
    np.testing.assert_array_equal(
        with_gold.final_projections.w_z, without_gold.final_projections.w_z
    )


@criterion(9, "posterior reweighing beats the baseline on the constructed fixture")
def test_reweigh_fixture_p_at_1_gain():
    records = load_dataset(FIXTURES / "reweigh.jsonl")
    # fixture construction: g equals the gold text and a history-parroting
    # distractor outranks gold on raw relevance; copy-heavy generator
    base = RunConfig(hyper=HyperParams(seed=42, alpha=0.5))
    config = dataclasses.replace(
        base,
        toy=dataclasses.replace(
            base.toy, lambda_copy=0.8, lambda_bigram=0.1, lambda_uniform=0.1
        ),
    )
    encoder, generator = build_backends(config)
    baseline = run_eval(records, config, encoder, generator)
    reweigh = run_eval(
        records, dataclasses.replace(config, mode=Mode.REWEIGH_POSTERIOR),
        encoder, generator,
    )
    assert not baseline["failures"] and not reweigh["failures"]
    p1_base = baseline["corpus"]["p_at_1"]
    p1_reweigh = reweigh["corpus"]["p_at_1"]
    print(f"  [criterion 9] baseline P@1={p1_base:.3f}, reweigh P@1={p1_reweigh:.3f}")
    assert p1_reweigh > p1_base


@criterion(10, "perturbation A/B golden and reported direction")
def test_perturbation_benchmark_golden():
    train_records = load_dataset(FIXTURES / "train.jsonl")
    eval_records = load_dataset(FIXTURES / "eval.jsonl")
    config = RunConfig(hyper=HyperParams(seed=42), train=reference_train_config())
    encoder, generator = build_backends(config)
    report = perturbation_benchmark(train_records, eval_records, config, encoder, generator)
    assert set(report["cells"]) == {
        "clean_selector/original_test",
        "clean_selector/perturbed_test",
        "noisy_selector/original_test",
        "noisy_selector/perturbed_test",
    }
    for cell in report["cells"].values():
        assert set(cell) == {"p_at_k", "marginal_nll_per_token"}
    golden = (GOLDEN / "perturb_report.json").read_text(encoding="utf-8")
    assert report_json(report) == golden, "benchmark deviates from the golden file"
    # direction is reported, never asserted
    delta = report["delta"]["perturbed_p_at_k_noisy_minus_clean"]
    print(f"  [criterion 10] noisy-minus-clean perturbed-test P@K delta: {delta:+.4f}")
