"""Embedding providers and vector primitives.

Two providers ship: a deterministic offline embedder (character-trigram
hashing, used by every offline test) and an HTTP client speaking the
common embeddings wire shape. Both satisfy the same small contract:
a declared dimension plus ``embed_batch(texts) -> list[list[float]]``.
"""

from __future__ import annotations

import math
import os
import zlib
from dataclasses import dataclass

import httpx

EMBEDDINGS_API_KEY_ENV = "RAILGATE_EMBEDDINGS_API_KEY"


class EmbeddingError(Exception):
    pass


class EmptyTextError(EmbeddingError):
    pass


class DimensionMismatch(EmbeddingError):
    pass


class ProviderError(Exception):
    """Remote provider failure; `retryable` hints whether a retry may help."""

    def __init__(self, message: str, retryable: bool = False):
        super().__init__(message)
        self.retryable = retryable


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple[float, ...]
    dim: int

    def __post_init__(self):
        if self.dim <= 0 or len(self.values) != self.dim:
            raise DimensionMismatch(
                f"vector has {len(self.values)} entries, declared dim {self.dim}"
            )

    def norm(self) -> float:
        return l2_norm(self.values)


def dot_product(a: tuple[float, ...], b: tuple[float, ...]) -> float:
    """Sequential-sum dot product.

    Deliberately plain arithmetic: the result is bit-reproducible across
    platforms, so rankings (including ties) are stable. Corpora here are
    hundreds of items, where an exhaustive scan is already fast.
    """
    total = 0.0
    for x, y in zip(a, b):
        total += x * y
    return total


def l2_norm(values: tuple[float, ...]) -> float:
    total = 0.0
    for x in values:
        total += x * x
    return math.sqrt(total)


def cosine_similarity(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """dot(a, b) / (|a| |b|); requires equal dims and nonzero norms."""
    if a.dim != b.dim:
        raise DimensionMismatch(f"dims differ: {a.dim} vs {b.dim}")
    na = l2_norm(a.values)
    nb = l2_norm(b.values)
    if na == 0.0 or nb == 0.0:
        raise EmbeddingError("cosine similarity undefined for zero vectors")
    return dot_product(a.values, b.values) / (na * nb)


def embed_text(provider, text: str) -> EmbeddingVector:
    """Embed one text through a provider, enforcing the shared contract."""
    if not text.strip():
        raise EmptyTextError("cannot embed empty text")
    values = provider.embed_batch([text])[0]
    vec = EmbeddingVector(tuple(float(v) for v in values), provider.dim)
    if vec.norm() == 0.0:
        raise EmbeddingError(f"provider returned a zero vector for {text!r}")
    return vec


class MockEmbedder:
    """Deterministic character-trigram hash embedder.

    Lowercased text is padded with one space on each side; each trigram is
    CRC32-hashed into one of `dim` buckets and counted, then the vector is
    L2-normalized. Pure and dependency-free; distinct texts may collide in
    bucket space, which is acceptable for its role as a test double.
    All components are non-negative, so cosine scores lie in [0, 1].
    """

    name = "mock-trigram"

    def __init__(self, dim: int = 64):
        if dim <= 0:
            raise ValueError("dim must be positive")
        self.dim = dim
        self._cache: dict[str, list[float]] = {}

    def embed_batch(self, texts: list[str]) -> list[list[float]]:
        return [self._embed_one(t) for t in texts]

    def _embed_one(self, text: str) -> list[float]:
        cached = self._cache.get(text)
        if cached is not None:
            return cached
        padded = f" {text.strip().lower()} "
        counts = [0.0] * self.dim
        for i in range(len(padded) - 2):
            trigram = padded[i : i + 3]
            counts[zlib.crc32(trigram.encode("utf-8")) % self.dim] += 1.0
        norm = math.sqrt(sum(c * c for c in counts))
        if norm == 0.0:  # only whitespace input; callers reject that earlier
            counts[0] = 1.0
            norm = 1.0
        values = [c / norm for c in counts]
        self._cache[text] = values
        return values


class HTTPEmbedder:
    """JSON-over-HTTP embeddings client.

    Request:  {"input": [texts], "model": name}
    Response: {"data": [{"embedding": [floats]}, ...]} in input order.
    """

    def __init__(self, endpoint: str, model: str, dim: int, timeout: float = 30.0):
        self.endpoint = endpoint
        self.model = model
        self.dim = dim
        self.timeout = timeout
        self.name = f"http:{model}"

    def embed_batch(self, texts: list[str]) -> list[list[float]]:
        headers = {}
        api_key = os.environ.get(EMBEDDINGS_API_KEY_ENV)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        try:
            resp = httpx.post(
                self.endpoint,
                json={"input": texts, "model": self.model},
                headers=headers,
                timeout=self.timeout,
            )
        except httpx.TimeoutException as exc:
            raise ProviderError(f"embedding request timed out: {exc}", retryable=True)
        except httpx.HTTPError as exc:
            raise ProviderError(f"embedding request failed: {exc}", retryable=True)
        if resp.status_code == 429 or resp.status_code >= 500:
            raise ProviderError(
                f"embedding endpoint returned {resp.status_code}", retryable=True
            )
        if resp.status_code != 200:
            raise ProviderError(
                f"embedding endpoint returned {resp.status_code}", retryable=False
            )
        payload = resp.json()
        try:
            return [row["embedding"] for row in payload["data"]]
        except (KeyError, TypeError) as exc:
            raise ProviderError(f"malformed embedding response: {exc}", retryable=False)


class StaticEmbedder:
    """Maps known texts to preset vectors; raises on unknown text.

    Test helper for constructing exact similarity scenarios.
    """

    name = "static"

    def __init__(self, dim: int, table: dict[str, list[float]] | None = None):
        self.dim = dim
        self.table: dict[str, list[float]] = dict(table or {})

    def set(self, text: str, values: list[float]) -> None:
        self.table[text] = list(values)

    def embed_batch(self, texts: list[str]) -> list[list[float]]:
        out = []
        for t in texts:
            if t not in self.table:
                raise ProviderError(f"no static vector for {t!r}", retryable=False)
            out.append(list(self.table[t]))
        return out
