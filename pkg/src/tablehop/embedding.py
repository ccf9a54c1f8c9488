"""Text embedding backends and cosine similarity.

Two interchangeable backends sit behind the same contract: a deterministic
local hashing embedder (signed bag-of-words into a fixed number of slots,
used by the offline test suite) and a remote HTTP embedder for real
sentence-encoder services. All vectors are unit L2 norm, except the all-zero
sentinel returned for texts with no tokens, so cosine similarity is a plain
dot product.
"""

from __future__ import annotations

import json
import logging
import os
import re
import threading
import urllib.error
import urllib.request
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import BackendError, ConfigError

logger = logging.getLogger(__name__)

API_KEY_ENV = "TABLEHOP_API_KEY"

DEFAULT_HASHING_DIM = 256

# FNV-1a 64-bit constants; contractual so independent implementations can
# reproduce the hashing embedder bit-for-bit.
FNV1A_OFFSET = 0xCBF29CE484222325
FNV1A_PRIME = 0x100000001B3
# Seed of the second hash that decides each token's sign (bit 0).
SIGN_OFFSET = 0x9E3779B97F4A7C15

_MASK64 = 0xFFFFFFFFFFFFFFFF
_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


@dataclass(frozen=True)
class Embedding:
    """A unit-norm dense vector, or the all-zero sentinel for empty text."""

    values: np.ndarray

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])

    def is_zero(self) -> bool:
        return not np.any(self.values)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Embedding):
            return NotImplemented
        return np.array_equal(self.values, other.values)


@dataclass(frozen=True)
class EmbedderConfig:
    kind: str = "hashing"  # hashing | remote
    dim: int | None = DEFAULT_HASHING_DIM
    endpoint: str | None = None
    timeout: float = 30.0
    batch_size: int = 16


def fnv1a_64(data: bytes, offset: int = FNV1A_OFFSET) -> int:
    h = offset
    for byte in data:
        h ^= byte
        h = (h * FNV1A_PRIME) & _MASK64
    return h


def tokenize(text: str) -> list[str]:
    """Lowercase and split on non-alphanumeric runs."""
    return _TOKEN_RE.findall(text.lower())


def cosine(a: Embedding, b: Embedding) -> float:
    """Dot product of pre-normalized vectors, clamped to [-1, 1]; 0 if either is the zero sentinel."""
    if a.dim != b.dim:
        raise ValueError(f"embedding dimension mismatch: {a.dim} != {b.dim}")
    return dot_score(a.values, b.values)


def dot_score(a: np.ndarray, b: np.ndarray) -> float:
    # Shared by cosine() and the vector index so both produce bit-identical
    # scores (matrix-vector BLAS paths round differently from per-row dots).
    if not np.any(a) or not np.any(b):
        return 0.0
    return float(min(1.0, max(-1.0, np.dot(a, b))))


class HashingEmbedder:
    """Deterministic signed bag-of-words embedder for hermetic runs.

    Each token lands in slot ``fnv1a(token) mod dim`` with sign taken from
    bit 0 of a second FNV-1a hash seeded differently; the accumulated vector
    is L2-normalized. Token order does not matter.
    """

    def __init__(self, dim: int = DEFAULT_HASHING_DIM):
        if dim <= 0:
            raise ConfigError("hashing embedder dim must be positive")
        self.dim = dim

    def embed_text(self, text: str) -> Embedding:
        acc = np.zeros(self.dim, dtype=np.float64)
        tokens = tokenize(text)
        if not tokens:
            return Embedding(acc)
        for token in tokens:
            data = token.encode("utf-8")
            slot = fnv1a_64(data) % self.dim
            sign = 1.0 if fnv1a_64(data, SIGN_OFFSET) & 1 == 0 else -1.0
            acc[slot] += sign
        norm = float(np.linalg.norm(acc))
        if norm == 0.0:
            # Opposite-signed tokens can cancel exactly; fall back to the
            # zero sentinel rather than dividing by zero.
            return Embedding(acc)
        return Embedding(acc / norm)

    def embed_batch(self, texts: Sequence[str]) -> list[Embedding]:
        return [self.embed_text(t) for t in texts]


# transport(url, payload, headers, timeout) -> (status, response body bytes)
Transport = Callable[[str, dict, dict[str, str], float], tuple[int, bytes]]


def _urllib_transport(url: str, payload: dict, headers: dict[str, str], timeout: float) -> tuple[int, bytes]:
    request = urllib.request.Request(
        url,
        data=json.dumps(payload).encode("utf-8"),
        headers={"Content-Type": "application/json", **headers},
        method="POST",
    )
    try:
        with urllib.request.urlopen(request, timeout=timeout) as response:
            return response.status, response.read()
    except urllib.error.HTTPError as exc:
        return exc.code, exc.read()
    except (urllib.error.URLError, OSError) as exc:
        raise BackendError(f"request to {url} failed: {exc}") from exc


def _auth_headers() -> dict[str, str]:
    token = os.environ.get(API_KEY_ENV)
    return {"Authorization": f"Bearer {token}"} if token else {}


def post_json(
    url: str, payload: dict, timeout: float, transport: Transport | None = None
) -> dict:
    """POST a JSON payload; non-2xx status or a non-object body is a BackendError."""
    transport = transport or _urllib_transport
    status, body = transport(url, payload, _auth_headers(), timeout)
    if not 200 <= status < 300:
        raise BackendError(f"{url} returned status {status}: {body[:200]!r}")
    try:
        parsed = json.loads(body)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise BackendError(f"{url} returned unparseable JSON: {exc}") from exc
    if not isinstance(parsed, dict):
        raise BackendError(f"{url} returned a non-object JSON body")
    return parsed


class RemoteEmbedder:
    """HTTP embedding client: POST {"input": [str]} -> {"embeddings": [[num]]}.

    Vectors are re-normalized locally so cosine == dot stays valid whatever
    the service returns. Requests are chunked by batch_size and bounded to
    ``max_in_flight`` concurrent calls.
    """

    def __init__(
        self,
        endpoint: str,
        timeout: float = 30.0,
        batch_size: int = 16,
        expected_dim: int | None = None,
        transport: Transport | None = None,
        max_in_flight: int = 4,
    ):
        if not endpoint:
            raise ConfigError("remote embedder requires an endpoint")
        if batch_size <= 0:
            raise ConfigError("batch_size must be positive")
        self.endpoint = endpoint
        self.timeout = timeout
        self.batch_size = batch_size
        self.expected_dim = expected_dim
        self._transport = transport
        self._gate = threading.Semaphore(max_in_flight)

    def embed_text(self, text: str) -> Embedding:
        return self.embed_batch([text])[0]

    def embed_batch(self, texts: Sequence[str]) -> list[Embedding]:
        out: list[Embedding] = []
        for start in range(0, len(texts), self.batch_size):
            out.extend(self._call(list(texts[start : start + self.batch_size])))
        return out

    def _call(self, chunk: list[str]) -> list[Embedding]:
        with self._gate:
            response = post_json(
                self.endpoint, {"input": chunk}, self.timeout, self._transport
            )
        vectors = response.get("embeddings")
        if not isinstance(vectors, list) or len(vectors) != len(chunk):
            raise BackendError(
                f"{self.endpoint}: expected {len(chunk)} embeddings, "
                f"got {len(vectors) if isinstance(vectors, list) else type(vectors).__name__}"
            )
        out = []
        for vector in vectors:
            values = np.asarray(vector, dtype=np.float64)
            if values.ndim != 1:
                raise BackendError(f"{self.endpoint}: embedding is not a flat vector")
            if self.expected_dim is not None and values.shape[0] != self.expected_dim:
                raise BackendError(
                    f"{self.endpoint}: embedding dim {values.shape[0]} != configured {self.expected_dim}"
                )
            norm = float(np.linalg.norm(values))
            out.append(Embedding(values / norm if norm > 0 else values))
        return out


def make_embedder(config: EmbedderConfig, transport: Transport | None = None):
    if config.kind == "hashing":
        return HashingEmbedder(dim=config.dim or DEFAULT_HASHING_DIM)
    if config.kind == "remote":
        if not config.endpoint:
            raise ConfigError("embedder kind 'remote' requires an endpoint")
        return RemoteEmbedder(
            endpoint=config.endpoint,
            timeout=config.timeout,
            batch_size=config.batch_size,
            expected_dim=config.dim,
            transport=transport,
        )
    raise ConfigError(f"unknown embedder kind '{config.kind}'")
