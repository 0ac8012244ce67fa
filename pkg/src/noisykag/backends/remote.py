"""HTTP JSON client for an external encoder/generator service.

Wire protocol (JSON bodies, UTF-8):

* ``POST <base>/embed``   ``{"texts": [...]}`` -> ``{"vectors": [[...], ...]}``
* ``POST <base>/score``   ``{"history": [{"speaker", "text"}, ...], "knowledge": "...",
  "response_tokens": [...]}`` -> ``{"token_logprobs": [...]}``
* ``POST <base>/greedy``  ``{"history": [...], "knowledge": "...", "max_len": N}``
  -> ``{"tokens": [...], "token_logprobs": [...]}``

The base URL comes from configuration or the NOISYKAG_BACKEND_URL environment
variable.  Responses are treated as deterministic within a run but never
assumed deterministic across runs.
"""

from __future__ import annotations

import json
import os
import time

import numpy as np
import requests

from ..core import DialogueHistory, Response
from .base import EmbeddingBackend, GeneratorBackend

ENDPOINT_ENV_VAR = "NOISYKAG_BACKEND_URL"


class RemoteBackendError(Exception):
    """Base class for remote backend failures."""


class RemoteNetworkError(RemoteBackendError):
    """Connection, DNS, or timeout failure."""


class RemoteStatusError(RemoteBackendError):
    """Non-2xx HTTP status."""


class RemoteSchemaError(RemoteBackendError):
    """Response body does not match the wire protocol."""


class RemoteDimensionError(RemoteBackendError):
    """Vector count or vector length disagrees with the request."""


def _excerpt(payload, limit: int = 200) -> str:
    text = payload if isinstance(payload, str) else json.dumps(payload, ensure_ascii=False)
    return text[:limit] + ("..." if len(text) > limit else "")


def resolve_endpoint(endpoint: str | None) -> str:
    url = endpoint or os.environ.get(ENDPOINT_ENV_VAR)
    if not url:
        raise RemoteBackendError(
            f"no backend endpoint configured (set {ENDPOINT_ENV_VAR} or pass an endpoint)"
        )
    return url.rstrip("/")


class _RemoteClient:
    def __init__(
        self,
        endpoint: str | None = None,
        timeout: float = 10.0,
        retries: int = 2,
        bearer_token: str | None = None,
    ):
        self.base_url = resolve_endpoint(endpoint)
        self.timeout = timeout
        self.retries = retries
        self.bearer_token = bearer_token

    def _post(self, path: str, body: dict) -> dict:
        url = f"{self.base_url}{path}"
        headers = {"Content-Type": "application/json"}
        if self.bearer_token:
            headers["Authorization"] = f"Bearer {self.bearer_token}"
        last_exc: Exception | None = None
        for attempt in range(self.retries + 1):
            try:
                resp = requests.post(url, json=body, headers=headers, timeout=self.timeout)
            except requests.RequestException as exc:
                last_exc = exc
                if attempt < self.retries:
                    time.sleep(min(0.1 * 2**attempt, 1.0))
                    continue
                raise RemoteNetworkError(f"POST {url} failed: {exc}") from exc
            if 500 <= resp.status_code < 600 and attempt < self.retries:
                last_exc = RemoteStatusError(
                    f"POST {url} returned {resp.status_code}: {_excerpt(resp.text)}"
                )
                time.sleep(min(0.1 * 2**attempt, 1.0))
                continue
            if not 200 <= resp.status_code < 300:
                raise RemoteStatusError(
                    f"POST {url} returned {resp.status_code}: {_excerpt(resp.text)}"
                )
            try:
                data = resp.json()
            except ValueError as exc:
                raise RemoteSchemaError(
                    f"POST {url} returned non-JSON body: {_excerpt(resp.text)}"
                ) from exc
            if not isinstance(data, dict):
                raise RemoteSchemaError(f"POST {url} returned non-object JSON: {_excerpt(data)}")
            return data
        raise RemoteNetworkError(f"POST {url} failed after retries: {last_exc}")


def _history_payload(history: DialogueHistory) -> list[dict]:
    return [{"speaker": t.speaker.value, "text": t.text} for t in history.turns]


class RemoteEncoder(_RemoteClient, EmbeddingBackend):
    """Batched embedding over POST /embed."""

    def __init__(self, endpoint: str | None = None, dim: int | None = None, **kwargs):
        super().__init__(endpoint, **kwargs)
        self._dim = dim

    @property
    def dim(self) -> int:
        if self._dim is None:
            raise RemoteBackendError("embedding dimension unknown before the first /embed call")
        return self._dim

    def embed_many(self, texts: list[str]) -> list[np.ndarray]:
        data = self._post("/embed", {"texts": list(texts)})
        vectors = data.get("vectors")
        if not isinstance(vectors, list) or not all(isinstance(v, list) for v in vectors):
            raise RemoteSchemaError(f"/embed response missing 'vectors' list: {_excerpt(data)}")
        if len(vectors) != len(texts):
            raise RemoteDimensionError(
                f"/embed returned {len(vectors)} vectors for {len(texts)} texts"
            )
        out = []
        for vec in vectors:
            arr = np.asarray(vec, dtype=np.float64)
            if arr.ndim != 1 or (self._dim is not None and arr.size != self._dim):
                raise RemoteDimensionError(
                    f"/embed vector of length {arr.size}, expected {self._dim}: {_excerpt(vec)}"
                )
            if self._dim is None:
                self._dim = arr.size
            out.append(arr)
        return out

    def embed(self, text: str) -> np.ndarray:
        return self.embed_many([text])[0]


class RemoteGenerator(_RemoteClient, GeneratorBackend):
    """Token scoring and greedy decoding over POST /score and /greedy.

    The remote vocabulary is not observable, so ``vocab`` is None.
    """

    def __init__(self, endpoint: str | None = None, max_len: int = 32, **kwargs):
        super().__init__(endpoint, **kwargs)
        self._max_len = max_len

    @property
    def max_len(self) -> int:
        return self._max_len

    def score_tokens(self, history, knowledge, tokens):
        tokens = tuple(tokens)
        data = self._post(
            "/score",
            {
                "history": _history_payload(history),
                "knowledge": knowledge.text,
                "response_tokens": list(tokens),
            },
        )
        lps = data.get("token_logprobs")
        if not isinstance(lps, list) or not all(isinstance(x, (int, float)) for x in lps):
            raise RemoteSchemaError(
                f"/score response missing 'token_logprobs' list: {_excerpt(data)}"
            )
        if len(lps) != len(tokens):
            raise RemoteSchemaError(
                f"/score returned {len(lps)} logprobs for {len(tokens)} tokens"
            )
        return tuple(float(x) for x in lps)

    def greedy(self, history, knowledge, max_len=None):
        limit = self._max_len if max_len is None else max_len
        data = self._post(
            "/greedy",
            {
                "history": _history_payload(history),
                "knowledge": knowledge.text,
                "max_len": limit,
            },
        )
        tokens = data.get("tokens")
        lps = data.get("token_logprobs")
        if not isinstance(tokens, list) or not isinstance(lps, list):
            raise RemoteSchemaError(
                f"/greedy response missing 'tokens' or 'token_logprobs': {_excerpt(data)}"
            )
        try:
            return Response(tuple(str(t) for t in tokens), tuple(float(x) for x in lps))
        except (TypeError, ValueError) as exc:
            raise RemoteSchemaError(f"/greedy returned invalid response: {_excerpt(data)}") from exc
