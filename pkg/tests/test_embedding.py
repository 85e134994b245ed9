from __future__ import annotations

import json

import httpx
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from newsbreadth.embedding import (
    DEFAULT_DIM,
    Embedding,
    EmbeddingError,
    HashingEmbedder,
    RemoteEmbedder,
    cosine_similarity,
    embed,
    similarity_matrix,
)

words = st.text(alphabet="abcdefghij ", min_size=1, max_size=60).filter(lambda s: s.split())
vectors = st.lists(st.floats(-10, 10, allow_nan=False), min_size=3, max_size=3).filter(lambda v: np.linalg.norm(v) > 1e-3)


def test_embed_is_deterministic_and_unit():
    a, b = embed("Boeing 737 delivery delay"), embed("Boeing 737 delivery delay")
    assert a == b
    assert a.dim == DEFAULT_DIM
    assert abs(np.linalg.norm(a.vector) - 1) < 1e-6


@pytest.mark.parametrize("text", ["", "   ", "\n\t"])
def test_embed_rejects_empty(text):
    with pytest.raises(EmbeddingError):
        embed(text)


def test_token_overlap_orders_similarity():
    e = HashingEmbedder()
    q, near, far = e.embed_batch(["boeing 737 delay", "737 delivery delay", "dividend announcement"])
    assert cosine_similarity(q, near) > cosine_similarity(q, far)


def test_cosine_examples():
    v = Embedding.from_raw([0.6, 0.8])
    assert cosine_similarity(v, v) == pytest.approx(1.0, abs=1e-12)
    assert cosine_similarity(Embedding.from_raw([1, 0]), Embedding.from_raw([0, 1])) == 0.0
    assert cosine_similarity(v, Embedding.from_raw([0.8, 0.6])) == pytest.approx(0.96, abs=1e-12)


def test_dimension_mismatch():
    with pytest.raises(EmbeddingError):
        cosine_similarity(Embedding.from_raw([1, 0]), Embedding.from_raw([1, 0, 0]))


def test_embedding_validates_norm_and_is_read_only():
    with pytest.raises(EmbeddingError):
        Embedding(np.array([1.0, 1.0]))
    e = Embedding.from_raw([3, 4])
    with pytest.raises(ValueError):
        e.vector[0] = 1.0
    with pytest.raises(EmbeddingError):
        Embedding.from_raw([0, 0])


@given(vectors, vectors)
def test_similarity_symmetric_and_bounded(a, b):
    ea, eb = Embedding.from_raw(a), Embedding.from_raw(b)
    s = cosine_similarity(ea, eb)
    assert s == cosine_similarity(eb, ea)
    assert -1.0 <= s <= 1.0
    assert cosine_similarity(ea, ea) == pytest.approx(1.0, abs=1e-9)


@given(st.lists(words, min_size=1, max_size=6))
def test_similarity_matrix_agrees_with_pairwise(texts):
    embs = HashingEmbedder(64).embed_batch(texts)
    m = similarity_matrix(embs)
    for i in range(len(embs)):
        for j in range(len(embs)):
            assert m[i, j] == pytest.approx(cosine_similarity(embs[i], embs[j]), abs=1e-12)


def _transport(handler):
    return httpx.MockTransport(handler)


def test_remote_embedder_openai_shape():
    seen = []

    def handler(request):
        body = json.loads(request.content)
        seen.append(body)
        assert request.headers["authorization"] == "Bearer k"
        return httpx.Response(200, json={"data": [{"embedding": [1.0, float(i), 0.0]} for i, _ in enumerate(body["input"])]})

    r = RemoteEmbedder("http://embed/v1/embeddings", "m", dim=3, api_key="k", batch_size=2, transport=_transport(handler))
    out = r.embed_batch(["a", "b", "c"])
    assert [len(b["input"]) for b in seen] == [2, 1]
    assert seen[0]["model"] == "m"
    assert all(abs(np.linalg.norm(e.vector) - 1) < 1e-9 for e in out)


def test_remote_embedder_alternate_shape_and_errors():
    ok = RemoteEmbedder("http://e", "m", dim=2, transport=_transport(lambda r: httpx.Response(200, json={"embeddings": [[0, 2]]})))
    assert ok.embed("x").vector.tolist() == [0.0, 1.0]
    wrong_dim = RemoteEmbedder("http://e", "m", dim=3, transport=_transport(lambda r: httpx.Response(200, json={"embeddings": [[0, 2]]})))
    with pytest.raises(EmbeddingError, match="dimension"):
        wrong_dim.embed("x")
    failing = RemoteEmbedder("http://e", "m", dim=2, transport=_transport(lambda r: httpx.Response(503)))
    with pytest.raises(EmbeddingError):
        failing.embed("x")
    short = RemoteEmbedder("http://e", "m", dim=2, transport=_transport(lambda r: httpx.Response(200, json={"embeddings": []})))
    with pytest.raises(EmbeddingError):
        short.embed("x")
