import logging

import httpx
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from narrlens.embedding import (
    API_KEY_ENV, DeterministicEmbedder, EmbedderConfig, EmbeddingError, RemoteEmbedder,
    cosine, deterministic_embed, embed_texts, fnv1a_64, make_embedder, tokenize,
)

words = st.sampled_from("alpha beta gamma delta storm flood heat army river grain plan war".split())
texts = st.lists(words, min_size=1, max_size=12).map(" ".join)


def test_fnv_reference_vectors():
    # published FNV-1a 64-bit test vectors
    assert fnv1a_64(b"") == 0xCBF29CE484222325
    assert fnv1a_64(b"a") == 0xAF63DC4C8601EC8C
    assert fnv1a_64(b"foobar") == 0x85944171F73967E8


def test_feature_layout():
    v = deterministic_embed("Hello hello", 1 << 20)
    # unigram "u:hello" twice plus bigram "b:hello hello", as a sparse signed count
    expected = np.zeros(1 << 20)
    for feat in ("u:hello", "u:hello", "b:hello hello"):
        h = fnv1a_64(feat.encode())
        expected[h % (1 << 20)] += -1.0 if h >> 63 else 1.0
    np.testing.assert_allclose(v, expected / np.linalg.norm(expected))
    assert tokenize("Hello, wörld-2!") == ["hello", "wörld", "2"]


def test_overlap_beats_disjoint_frozen_values():
    # Values computed by an independent sparse pure-Python reference.
    a = deterministic_embed("the cat sat on the warm mat", 256)
    b = deterministic_embed("the cat sat on the mat today", 256)
    c = deterministic_embed("stock markets fell sharply overnight", 256)
    assert cosine(a, b) == pytest.approx(0.8, abs=1e-12)
    assert cosine(a, c) == pytest.approx(-0.08606629658238703, abs=1e-12)
    assert cosine(a, b) > cosine(a, c)
    d64 = [deterministic_embed(t, 64) for t in ("the cat sat on the warm mat",
                                                 "the cat sat on the mat today",
                                                 "stock markets fell sharply overnight")]
    assert cosine(d64[0], d64[1]) == pytest.approx(0.7877263614433762, abs=1e-12)
    assert cosine(d64[0], d64[2]) == pytest.approx(0.08362420100070908, abs=1e-12)


def test_determinism_and_norm():
    a = deterministic_embed("the cat sat", 64)
    b = deterministic_embed("the cat sat", 64)
    assert np.array_equal(a, b)
    assert a.shape == (64,)
    assert np.linalg.norm(a) == pytest.approx(1.0, abs=1e-6)


def test_empty_text_rejected():
    with pytest.raises(EmbeddingError):
        deterministic_embed("", 64)
    with pytest.raises(EmbeddingError):
        deterministic_embed("   ", 64)


def test_degenerate_text_gives_e1(caplog):
    with caplog.at_level(logging.WARNING):
        v = deterministic_embed("... !!!", 16)
    assert v[0] == 1.0 and np.count_nonzero(v) == 1
    assert "degenerate" in caplog.text


def test_cosine_examples():
    e1, e2 = np.eye(4)[0], np.eye(4)[1]
    assert cosine(e1, e2) == 0.0
    v = deterministic_embed("river flood", 32)
    assert cosine(v, v) == pytest.approx(1.0, abs=1e-6)
    assert cosine(v, -v) == pytest.approx(-1.0, abs=1e-12)
    with pytest.raises(ValueError):
        cosine(np.ones(3), np.ones(4))


@given(texts, texts)
def test_cosine_symmetric_and_bounded(a, b):
    va, vb = deterministic_embed(a, 64), deterministic_embed(b, 64)
    assert cosine(va, vb) == cosine(vb, va)
    assert abs(cosine(va, vb)) <= 1 + 1e-9


@settings(max_examples=30)
@given(st.lists(texts, min_size=1, max_size=8), st.randoms(use_true_random=False))
def test_embed_texts_alignment(batch, rnd):
    cfg = EmbedderConfig(dim=32)
    out = embed_texts(cfg, batch)
    perm = list(range(len(batch)))
    rnd.shuffle(perm)
    shuffled = embed_texts(cfg, [batch[i] for i in perm])
    for k, i in enumerate(perm):
        assert np.array_equal(shuffled[k], out[i])


def test_embed_texts_errors():
    with pytest.raises(EmbeddingError):
        embed_texts(EmbedderConfig(dim=8), [])
    with pytest.raises(ValueError):
        EmbedderConfig(dim=0)
    with pytest.raises(ValueError):
        EmbedderConfig(backend="nope")


def _remote(handler, **kw):
    cfg = EmbedderConfig(backend="remote", endpoint="https://embed.test/v1/embeddings", **kw)
    return RemoteEmbedder(cfg, client=httpx.Client(transport=httpx.MockTransport(handler)), backoff=0.0)


def test_remote_batches_and_orders(monkeypatch):
    monkeypatch.setenv(API_KEY_ENV, "secret")
    seen = []

    def handler(request):
        body = __import__("json").loads(request.content)
        seen.append((request.headers.get("authorization"), body["input"]))
        data = [{"index": i, "embedding": [float(len(t)), 1.0, 0.0]} for i, t in enumerate(body["input"])]
        return httpx.Response(200, json={"data": data[::-1]})

    emb = _remote(handler, dim=3, max_batch=2, max_parallel=1)
    out = emb.embed(["a", "bbb", "cc"])
    assert [b for _, b in seen] == [["a", "bbb"], ["cc"]]
    assert all(auth == "Bearer secret" for auth, _ in seen)
    np.testing.assert_allclose(out[1], np.array([3.0, 1.0, 0.0]) / np.sqrt(10))
    assert all(np.linalg.norm(v) == pytest.approx(1.0) for v in out)


def test_remote_dimension_mismatch():
    def handler(request):
        return httpx.Response(200, json={"data": [{"index": 0, "embedding": [1.0, 0.0]}]})

    with pytest.raises(EmbeddingError, match="dimension mismatch"):
        _remote(handler, dim=3).embed(["x"])


def test_remote_retries_then_succeeds():
    calls = []

    def handler(request):
        calls.append(1)
        if len(calls) < 3:
            return httpx.Response(503)
        return httpx.Response(200, json={"data": [{"index": 0, "embedding": [0.0, 2.0]}]})

    out = _remote(handler, dim=2, retries=2).embed(["x"])
    assert len(calls) == 3
    np.testing.assert_allclose(out[0], [0.0, 1.0])


def test_remote_gives_up():
    def handler(request):
        return httpx.Response(500)

    with pytest.raises(EmbeddingError, match="after 2 attempts"):
        _remote(handler, dim=2, retries=1).embed(["x"])


def test_offline_forces_deterministic():
    cfg = EmbedderConfig(backend="remote", endpoint="https://embed.test", dim=16)
    assert isinstance(make_embedder(cfg, offline=True), DeterministicEmbedder)
