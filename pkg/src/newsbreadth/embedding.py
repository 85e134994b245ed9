"""Sentence embeddings as unit vectors, plus the similarity math clustering needs."""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from typing import Protocol, Sequence

import httpx
import numpy as np

DEFAULT_DIM = 384
_TOKEN_RE = re.compile(r"[a-z0-9]+")


class EmbeddingError(Exception):
    pass


@dataclass(frozen=True, eq=False)
class Embedding:
    vector: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vector, dtype=np.float64)
        if v.ndim != 1 or v.size == 0:
            raise EmbeddingError("embedding must be a non-empty 1-d vector")
        norm = float(np.linalg.norm(v))
        if not abs(norm - 1.0) <= 1e-6:
            raise EmbeddingError(f"embedding is not unit-norm (|v| = {norm:.6g})")
        v.setflags(write=False)
        object.__setattr__(self, "vector", v)

    @property
    def dim(self) -> int:
        return self.vector.size

    @classmethod
    def from_raw(cls, values) -> Embedding:
        """Normalize an arbitrary non-zero vector."""
        v = np.asarray(values, dtype=np.float64)
        norm = np.linalg.norm(v)
        if not np.isfinite(norm) or norm == 0:
            raise EmbeddingError("cannot normalize a zero or non-finite vector")
        return cls(v / norm)

    def __eq__(self, other):
        return isinstance(other, Embedding) and np.array_equal(self.vector, other.vector)

    def __hash__(self):
        return hash(self.vector.tobytes())


def cosine_similarity(a: Embedding, b: Embedding) -> float:
    if a.dim != b.dim:
        raise EmbeddingError(f"dimension mismatch: {a.dim} vs {b.dim}")
    # sum of elementwise products is order-independent in its operands, so sim(a,b) == sim(b,a)
    s = float(np.dot(a.vector, b.vector))
    return min(1.0, max(-1.0, s))


def similarity_matrix(embeddings: Sequence[Embedding]) -> np.ndarray:
    """Pairwise cosine similarities, symmetric, unit diagonal, clamped to [-1, 1]."""
    if not embeddings:
        return np.zeros((0, 0))
    dims = {e.dim for e in embeddings}
    if len(dims) != 1:
        raise EmbeddingError(f"mixed embedding dimensions: {sorted(dims)}")
    m = np.stack([e.vector for e in embeddings])
    sim = m @ m.T
    sim = (sim + sim.T) / 2.0
    np.fill_diagonal(sim, 1.0)
    return np.clip(sim, -1.0, 1.0)


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


class Embedder(Protocol):
    model: str
    dim: int

    def embed_batch(self, texts: Sequence[str]) -> list[Embedding]: ...


def _check_text(text: str) -> None:
    if not isinstance(text, str) or not text.strip():
        raise EmbeddingError("cannot embed empty text")


class HashingEmbedder:
    """Offline embedder: signed bag of hashed tokens projected to ``dim`` and normalized.

    Texts sharing more tokens get higher cosine similarity, which is enough
    structure to exercise clustering end to end without a neural model.
    Hashing uses blake2b, so vectors are stable across processes.
    """

    model = "hashing-bow-v1"

    def __init__(self, dim: int = DEFAULT_DIM):
        if dim <= 0:
            raise ValueError("dim must be positive")
        self.dim = dim

    def _slot(self, token: str) -> tuple[int, float]:
        h = int.from_bytes(hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest(), "little")
        return h % self.dim, (1.0 if (h >> 63) & 1 == 0 else -1.0)

    def embed(self, text: str) -> Embedding:
        _check_text(text)
        tokens = tokenize(text)
        if not tokens:
            raise EmbeddingError(f"no alphanumeric tokens in {text!r}")
        v = np.zeros(self.dim)
        for tok in tokens:
            idx, sign = self._slot(tok)
            v[idx] += sign
        if not v.any():
            # every token cancelled out; fall back to unsigned counts
            for tok in tokens:
                v[self._slot(tok)[0]] += 1.0
        return Embedding.from_raw(v)

    def embed_batch(self, texts):
        return [self.embed(t) for t in texts]


class RemoteEmbedder:
    """Any HTTP endpoint taking ``{"model": ..., "input": [texts]}`` and returning vectors.

    Accepts either ``{"data": [{"embedding": [...]}, ...]}`` (OpenAI style) or
    ``{"embeddings": [[...], ...]}``.
    """

    def __init__(
        self,
        url: str,
        model: str,
        dim: int = DEFAULT_DIM,
        api_key: str | None = None,
        batch_size: int = 64,
        timeout: float = 30.0,
        transport: httpx.BaseTransport | None = None,
    ):
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._client = httpx.Client(timeout=timeout, headers=headers, transport=transport)
        self.url = url
        self.model = model
        self.dim = dim
        self.batch_size = batch_size

    def _post(self, texts: list[str]) -> list[list[float]]:
        try:
            resp = self._client.post(self.url, json={"model": self.model, "input": texts})
            resp.raise_for_status()
            body = resp.json()
        except (httpx.HTTPError, ValueError) as exc:
            raise EmbeddingError(f"embedding provider failed: {exc}") from exc
        if "data" in body:
            vectors = [item["embedding"] for item in body["data"]]
        else:
            vectors = body.get("embeddings")
        if not isinstance(vectors, list) or len(vectors) != len(texts):
            raise EmbeddingError("embedding provider returned the wrong number of vectors")
        return vectors

    def embed_batch(self, texts):
        for t in texts:
            _check_text(t)
        out = []
        for i in range(0, len(texts), self.batch_size):
            for raw in self._post(list(texts[i : i + self.batch_size])):
                e = Embedding.from_raw(raw)
                if e.dim != self.dim:
                    raise EmbeddingError(f"dimension mismatch: provider gave {e.dim}, corpus uses {self.dim}")
                out.append(e)
        return out

    def embed(self, text: str) -> Embedding:
        return self.embed_batch([text])[0]


def embed(text: str, embedder: Embedder | None = None) -> Embedding:
    """Embed one text with ``embedder`` (the hashing embedder by default)."""
    _check_text(text)
    embedder = embedder or HashingEmbedder()
    return embedder.embed_batch([text])[0]
