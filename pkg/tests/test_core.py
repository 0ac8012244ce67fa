"""Text normalization, log-space utilities, and domain type invariants."""

import math

import numpy as np
import pytest

from noisykag.core import (
    CandidatePool,
    DialogueHistory,
    GeneratedKnowledge,
    HyperParams,
    KnowledgeCandidate,
    LogDistribution,
    Response,
    Turn,
    log_softmax,
    logsumexp,
    normalize_text,
    sharpen,
)


class TestNormalizeText:
    def test_empty(self):
        assert normalize_text("") == []

    def test_punctuation_and_case(self):
        assert normalize_text("Hello, World!") == ["hello", "world"]

    def test_whitespace_runs(self):
        assert normalize_text("a  b\tc") == ["a", "b", "c"]

    def test_underscore_and_symbols_split(self):
        assert normalize_text("a_b c-d") == ["a", "b", "c", "d"]

    def test_idempotent_on_joined_output(self):
        rng = np.random.default_rng(42)
        alphabet = list("abc XYZ.!?\t-_09")
        for _ in range(200):
            raw = "".join(rng.choice(alphabet, size=rng.integers(0, 40)))
            once = normalize_text(raw)
            assert normalize_text(" ".join(once)) == once


class TestLogSoftmax:
    def test_symmetric(self):
        out = log_softmax([0.0, 0.0, 0.0])
        np.testing.assert_allclose(np.exp(out), [1 / 3] * 3, atol=1e-12)

    def test_analytic_two_point(self):
        out = log_softmax([math.log(2), 0.0])
        np.testing.assert_allclose(np.exp(out), [2 / 3, 1 / 3], atol=1e-12)

    def test_singleton(self):
        np.testing.assert_allclose(log_softmax([5.0]), [0.0], atol=1e-12)

    def test_rejects_empty_and_nonfinite(self):
        with pytest.raises(ValueError):
            log_softmax([])
        with pytest.raises(ValueError):
            log_softmax([0.0, math.inf])
        with pytest.raises(ValueError):
            log_softmax([0.0, math.nan])

    def test_sums_to_one_and_shift_invariant(self):
        rng = np.random.default_rng(42)
        for _ in range(1000):
            logits = rng.normal(scale=10.0, size=rng.integers(1, 12))
            out = log_softmax(logits)
            assert abs(np.exp(out).sum() - 1.0) < 1e-12
            shifted = log_softmax(logits + rng.normal(scale=100.0))
            np.testing.assert_allclose(out, shifted, atol=1e-12)

    def test_extreme_logits_stable(self):
        out = log_softmax([1000.0, 0.0, -1000.0])
        assert np.all(np.isfinite(out[:1]))
        assert abs(np.exp(out).sum() - 1.0) < 1e-12


class TestLogsumexp:
    def test_matches_direct_computation(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            vals = rng.normal(size=5)
            assert abs(logsumexp(vals) - math.log(np.exp(vals).sum())) < 1e-12

    def test_all_neg_inf(self):
        assert logsumexp(np.array([-math.inf, -math.inf])) == -math.inf


def dist(probs, ids=None):
    ids = ids or [f"c{i}" for i in range(len(probs))]
    return LogDistribution(tuple(ids), np.log(probs))


class TestSharpen:
    def test_identity(self):
        d = dist([0.8, 0.2])
        assert sharpen(d, 1.0) is d

    def test_zero_exponent_uniform(self):
        out = sharpen(dist([0.8, 0.2]), 0.0)
        np.testing.assert_allclose(out.probs(), [0.5, 0.5], atol=1e-12)

    def test_zero_exponent_with_structural_zero(self):
        d = LogDistribution(("a", "b"), np.array([0.0, -math.inf]))
        out = sharpen(d, 0.0)
        np.testing.assert_allclose(out.probs(), [0.5, 0.5], atol=1e-12)

    def test_square_root_hand_value(self):
        out = sharpen(dist([0.941, 0.059]), 0.5)
        np.testing.assert_allclose(out.probs(), [0.800, 0.200], atol=5e-4)

    def test_preserves_argmax_and_normalizes(self):
        rng = np.random.default_rng(42)
        for _ in range(1000):
            n = int(rng.integers(2, 8))
            p = rng.dirichlet(np.ones(n))
            d = dist(p)
            e = float(rng.uniform(0.01, 3.0))
            out = sharpen(d, e)
            assert abs(np.exp(out.logweights).sum() - 1.0) < 1e-9
            assert int(np.argmax(out.logweights)) == int(np.argmax(d.logweights))


class TestLogDistribution:
    def test_rejects_unnormalized_when_flagged(self):
        with pytest.raises(ValueError):
            LogDistribution(("a", "b"), np.log([0.5, 0.4]))

    def test_unnormalized_allowed_when_unflagged(self):
        d = LogDistribution(("a", "b"), np.log([0.5, 0.4]), normalized=False)
        assert not d.normalized

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            LogDistribution(("a",), np.log([0.5, 0.5]))

    def test_duplicate_ids(self):
        with pytest.raises(ValueError):
            LogDistribution(("a", "a"), np.log([0.5, 0.5]))

    def test_immutable_weights(self):
        d = dist([0.5, 0.5])
        with pytest.raises(ValueError):
            d.logweights[0] = 0.0

    def test_argmax_tie_breaks_by_order(self):
        d = dist([0.25, 0.25, 0.5], ids=["x", "y", "z"])
        assert d.argmax_id() == "z"
        tied = dist([0.5, 0.5], ids=["b", "a"])
        assert tied.argmax_id() == "b"
        assert tied.argmax_id(tie_order={"b": 5, "a": 1}) == "a"


class TestDomainTypes:
    def test_turn_requires_text(self):
        with pytest.raises(ValueError):
            Turn("wizard", "   ")
        assert Turn("wizard", "hi").speaker.value == "wizard"

    def test_history_requires_turns(self):
        with pytest.raises(ValueError):
            DialogueHistory(())
        h = DialogueHistory((Turn("apprentice", "one"), Turn("wizard", "two")))
        assert h.flat_text() == "one two"

    def test_pool_unique_ids_and_gold(self):
        a, b = KnowledgeCandidate("a", "x"), KnowledgeCandidate("b", "y")
        with pytest.raises(ValueError):
            CandidatePool((a, KnowledgeCandidate("a", "z")))
        with pytest.raises(ValueError):
            CandidatePool((a, b), gold_id="missing")
        pool = CandidatePool((a, b), gold_id="b")
        assert pool.by_id("b").text == "y"
        assert pool.index_of("b") == 1

    def test_generated_knowledge_nonempty(self):
        with pytest.raises(ValueError):
            GeneratedKnowledge(" ")

    def test_response_invariants(self):
        with pytest.raises(ValueError):
            Response(("a",), (0.0, -1.0))
        with pytest.raises(ValueError):
            Response(("a",), (0.5,))
        r = Response(("a", "</s>"), (math.log(0.5), math.log(0.25)))
        assert r.text() == "a"

    def test_hyper_params_bounds(self):
        with pytest.raises(ValueError):
            HyperParams(k=0)
        with pytest.raises(ValueError):
            HyperParams(alpha=0.0)
        with pytest.raises(ValueError):
            HyperParams(beta=1.5)
        with pytest.raises(ValueError):
            HyperParams(gumbel_scale=-0.1)
