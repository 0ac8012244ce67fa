from pathlib import Path

import pytest

from noisykag.backends import ToyEncoder, ToyEncoderConfig, ToyGenerator, ToyGeneratorConfig
from noisykag.evaluation import default_corpus_path

REPO_ROOT = Path(__file__).resolve().parent.parent
FIXTURES = REPO_ROOT / "fixtures"
GOLDEN = Path(__file__).resolve().parent / "golden"


@pytest.fixture(scope="session")
def corpus_path() -> Path:
    return default_corpus_path()


@pytest.fixture(scope="session")
def toy_encoder() -> ToyEncoder:
    return ToyEncoder(ToyEncoderConfig(dim=32, hash_seed=0))


@pytest.fixture(scope="session")
def toy_generator(corpus_path) -> ToyGenerator:
    return ToyGenerator(ToyGeneratorConfig(corpus_path=corpus_path))


@pytest.fixture(scope="session")
def copy_heavy_generator(corpus_path) -> ToyGenerator:
    return ToyGenerator(
        ToyGeneratorConfig(
            corpus_path=corpus_path, lambda_copy=0.8, lambda_bigram=0.1, lambda_uniform=0.1
        )
    )
