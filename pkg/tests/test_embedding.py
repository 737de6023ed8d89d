"""Embedding providers, the binary container, and span-vector assembly."""

import numpy as np
import pytest

from corefkit.corpus import Document
from corefkit.embedding import (
    EmbeddingLookupError,
    FileProvider,
    HashProvider,
    bucket_width,
    build_span_repr,
    hash_embeddings,
    load_embeddings,
    make_provider,
    write_container,
)


def doc_of(tokens, key="tc/emb/doc_0"):
    return Document(key, [list(tokens)], ["-"] * len(tokens))


class TestHashEmbeddings:
    def test_deterministic(self):
        doc = doc_of(["the", "cat", "sat"])
        a = hash_embeddings(doc, 8, seed=1)
        b = hash_embeddings(doc, 8, seed=1)
        np.testing.assert_array_equal(a.vectors, b.vectors)

    def test_different_seeds_differ(self):
        doc = doc_of(["the", "cat", "sat"])
        hits = 0
        for seed in range(100):
            a = hash_embeddings(doc, 8, seed=seed)
            b = hash_embeddings(doc, 8, seed=seed + 1000)
            if not np.array_equal(a.vectors, b.vectors):
                hits += 1
        assert hits == 100

    def test_position_salted(self):
        doc = doc_of(["the", "a", "b", "c", "d", "the"])
        emb = hash_embeddings(doc, 16, seed=0)
        assert not np.array_equal(emb.vectors[0], emb.vectors[5])

    def test_range_and_shape(self):
        doc = doc_of(["x"] * 10)
        emb = hash_embeddings(doc, 32, seed=3)
        assert emb.vectors.shape == (10, 32)
        assert (emb.vectors >= -1).all() and (emb.vectors <= 1).all()

    def test_bad_dim(self):
        with pytest.raises(ValueError):
            hash_embeddings(doc_of(["x"]), 0, seed=0)


class TestContainer:
    def test_write_and_load(self, rng, tmp_path):
        path = tmp_path / "emb.bin"
        recs = [(f"nw/doc_{i}", rng.standard_normal((3 + i, 8)).astype(np.float32)) for i in range(4)]
        write_container(path, 8, recs)
        for key, vecs in recs:
            emb = load_embeddings(path, key)
            assert emb.dim == 8
            np.testing.assert_allclose(emb.vectors, vecs, atol=1e-6)

    def test_missing_doc_key(self, rng, tmp_path):
        path = tmp_path / "emb.bin"
        write_container(path, 4, [("nw/doc_0", rng.standard_normal((2, 4)))])
        with pytest.raises(EmbeddingLookupError):
            load_embeddings(path, "nw/doc_9")

    def test_dim_mismatch_on_write(self, rng, tmp_path):
        with pytest.raises(ValueError):
            write_container(tmp_path / "e.bin", 4, [("k", rng.standard_normal((2, 5)))])

    def test_jsonlines_fallback(self, tmp_path):
        path = tmp_path / "emb.jsonl"
        path.write_text('{"doc_key": "nw/doc_0", "dim": 2, "vectors": [[0.5, -0.5]]}\n')
        emb = load_embeddings(path, "nw/doc_0")
        np.testing.assert_allclose(emb.vectors, [[0.5, -0.5]])

    def test_file_provider_checks_token_count(self, rng, tmp_path):
        path = tmp_path / "emb.bin"
        doc = doc_of(["a", "b", "c"], key="nw/doc_0")
        write_container(path, 4, [("nw/doc_0", rng.standard_normal((2, 4)))])
        provider = FileProvider(path)
        with pytest.raises(ValueError, match="3 tokens"):
            provider.get(doc)

    def test_make_provider(self, tmp_path):
        assert isinstance(make_provider("hash", dim=4, seed=0), HashProvider)
        with pytest.raises(ValueError):
            make_provider("file")
        with pytest.raises(ValueError):
            make_provider("magic")


class TestSpanRepr:
    def test_unit_width_span_repeats_token_vector(self, rng):
        emb = hash_embeddings(doc_of(["a", "b", "c"]), 6, seed=0)
        table = rng.standard_normal((9, 4))
        rep = build_span_repr(emb, (1, 1), rng.standard_normal(6), table)
        np.testing.assert_allclose(rep.g[:6], emb.vectors[1])
        np.testing.assert_allclose(rep.g[6:12], emb.vectors[1])
        np.testing.assert_allclose(rep.g[12:18], emb.vectors[1])
        np.testing.assert_allclose(rep.g[18:], table[0])
        assert rep.g.shape == (3 * 6 + 4,)

    def test_equal_head_scores_give_mean(self, rng):
        emb = hash_embeddings(doc_of(["a", "b"]), 6, seed=1)
        rep = build_span_repr(emb, (0, 1), np.zeros(6), rng.standard_normal((9, 4)))
        np.testing.assert_allclose(rep.g[12:18], emb.vectors.mean(axis=0), atol=1e-12)

    def test_attention_sums_to_one(self, rng):
        doc = doc_of([f"w{i}" for i in range(30)])
        emb = hash_embeddings(doc, 8, seed=2)
        head = rng.standard_normal(8)
        for _ in range(50):
            s = int(rng.integers(0, 30))
            e = int(rng.integers(s, 30))
            toks = emb.vectors[s : e + 1]
            scores = toks @ head
            att = np.exp(scores - scores.max())
            att /= att.sum()
            assert abs(att.sum() - 1.0) <= 1e-6
            rep = build_span_repr(emb, (s, e), head, rng.standard_normal((9, 4)))
            np.testing.assert_allclose(rep.g[16:24], att @ toks, atol=1e-9)

    def test_out_of_range_span(self, rng):
        emb = hash_embeddings(doc_of(["a"]), 4, seed=0)
        with pytest.raises(ValueError):
            build_span_repr(emb, (0, 1), np.zeros(4), rng.standard_normal((9, 4)))


class TestBucketWidth:
    def test_bucket_edges(self):
        expected = {1: 0, 2: 1, 3: 2, 4: 3, 5: 4, 7: 4, 8: 5, 15: 5, 16: 6, 31: 6, 32: 7, 63: 7, 64: 8, 500: 8}
        for width, bucket in expected.items():
            assert bucket_width(width) == bucket
        with pytest.raises(ValueError):
            bucket_width(0)
