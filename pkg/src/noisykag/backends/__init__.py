from .base import CachingEncoder, CachingGenerator, EmbeddingBackend, GeneratorBackend
from .remote import (
    ENDPOINT_ENV_VAR,
    RemoteBackendError,
    RemoteDimensionError,
    RemoteEncoder,
    RemoteGenerator,
    RemoteNetworkError,
    RemoteSchemaError,
    RemoteStatusError,
)
from .toy import START_CONTEXT, ToyEncoder, ToyEncoderConfig, ToyGenerator, ToyGeneratorConfig

__all__ = [
    "CachingEncoder",
    "CachingGenerator",
    "EmbeddingBackend",
    "GeneratorBackend",
    "ENDPOINT_ENV_VAR",
    "RemoteBackendError",
    "RemoteDimensionError",
    "RemoteEncoder",
    "RemoteGenerator",
    "RemoteNetworkError",
    "RemoteSchemaError",
    "RemoteStatusError",
    "START_CONTEXT",
    "ToyEncoder",
    "ToyEncoderConfig",
    "ToyGenerator",
    "ToyGeneratorConfig",
]
