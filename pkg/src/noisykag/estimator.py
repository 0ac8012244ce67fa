"""Scikit-learn style front end.

``KnowledgeSelector`` wraps projection training (``fit``) and posterior-
reweighed response production (``predict``) behind the estimator API, so the
pipeline composes with the wider ecosystem: ``get_params``/``set_params``,
``clone``, and grid-search tooling all work on it.
"""

from __future__ import annotations

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .backends.base import EmbeddingBackend, GeneratorBackend
from .core import HyperParams
from .data import DatasetRecord
from .evaluation import full_ranking
from .inference import InferenceTrace, respond
from .metrics import unigram_f1
from .synth import record_to_train_example
from .training import TrainConfig, TrainExample, train


class KnowledgeSelector(BaseEstimator):
    """Dual-projection knowledge selector with posterior reweighing.

    Parameters mirror the pipeline hyper-parameters; ``encoder`` and
    ``generator`` are backend instances (toy or remote).  ``fit`` trains the
    two projection matrices on (history, pool, reference) examples;
    ``predict`` runs the full reweighing inference per record.
    """

    def __init__(
        self,
        encoder: EmbeddingBackend | None = None,
        generator: GeneratorBackend | None = None,
        k: int = 4,
        alpha: float = 5.0,
        beta: float = 0.4,
        gumbel_scale: float = 1.0,
        gumbel_location: float = 0.0,
        noisy: bool = True,
        learning_rate: float = 0.05,
        epochs: int = 200,
        init_scale: float = 1.0,
        seed: int = 0,
    ):
        self.encoder = encoder
        self.generator = generator
        self.k = k
        self.alpha = alpha
        self.beta = beta
        self.gumbel_scale = gumbel_scale
        self.gumbel_location = gumbel_location
        self.noisy = noisy
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.init_scale = init_scale
        self.seed = seed

    def _hyper(self) -> HyperParams:
        return HyperParams(
            k=self.k,
            alpha=self.alpha,
            beta=self.beta,
            gumbel_scale=self.gumbel_scale,
            gumbel_location=self.gumbel_location,
            seed=self.seed,
        )

    def _backends(self) -> tuple[EmbeddingBackend, GeneratorBackend]:
        if self.encoder is None or self.generator is None:
            raise ValueError("KnowledgeSelector needs both an encoder and a generator")
        return self.encoder, self.generator

    @staticmethod
    def _as_examples(X) -> list[TrainExample]:
        out = []
        for item in X:
            if isinstance(item, TrainExample):
                out.append(item)
            elif isinstance(item, DatasetRecord):
                out.append(record_to_train_example(item))
            else:
                raise TypeError(f"cannot fit on {type(item).__name__}")
        return out

    def fit(self, X, y=None):
        """Train the projections on TrainExamples or DatasetRecords."""
        encoder, generator = self._backends()
        config = TrainConfig(
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            k=self.k,
            noisy=self.noisy,
            hyper=self._hyper(),
            init_scale=self.init_scale,
        )
        report = train(self._as_examples(X), config, encoder, generator)
        self.projections_ = report.final_projections
        self.loss_curve_ = report.per_epoch_nll
        return self

    def predict_trace(self, X) -> list[InferenceTrace]:
        """Full inference trace per record (missing generated knowledge falls
        back to a uniform similarity factor)."""
        check_is_fitted(self, "projections_")
        encoder, generator = self._backends()
        return [
            respond(
                rec.history,
                rec.candidates,
                rec.generated_knowledge,
                self.projections_,
                encoder,
                generator,
                self._hyper(),
            )
            for rec in X
        ]

    def predict(self, X) -> list[str]:
        """Response text per record."""
        return [trace.final_response.text() for trace in self.predict_trace(X)]

    def predict_proba(self, X) -> list[dict[str, float]]:
        """Posterior selection probabilities per record, keyed by candidate id."""
        return [
            {cid: float(p) for cid, p in zip(t.posterior.ids, t.posterior.probs())}
            for t in self.predict_trace(X)
        ]

    def rank(self, X) -> list[list[str]]:
        """Full candidate ranking per record: retained ids by posterior, the
        rest by raw relevance."""
        return [
            full_ranking(trace.posterior, trace.raw_scores, rec.candidates)
            for rec, trace in zip(X, self.predict_trace(X))
        ]

    def score(self, X, y=None) -> float:
        """Mean unigram F1 of predictions against the records' references
        (or against ``y`` when given)."""
        references = y if y is not None else [rec.reference_response for rec in X]
        predictions = self.predict(X)
        if len(references) != len(predictions):
            raise ValueError("need one reference per record")
        scores = [unigram_f1(h, r).f1 for h, r in zip(predictions, references)]
        return float(sum(scores) / len(scores)) if scores else 0.0
