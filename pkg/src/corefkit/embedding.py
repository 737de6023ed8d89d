"""Per-token embedding providers and span-representation assembly.

Real contextual vectors arrive through an indexed binary container written
offline by an exporter; a deterministic hash provider generates test
vectors without any encoder.  Either way the engine only ever sees a
(token -> dense vector) mapping per document.

Container layout (little-endian):
  header : magic b"CEMB" | u16 version=1 | u16 reserved | u32 dim | u64 index_offset
  records: per doc, u32 n_tokens followed by n_tokens*dim float32
  index  : u32 n_docs, then per doc u16 keylen | key utf-8 | u64 offset | u32 n_tokens
A jsonlines fallback ({"doc_key", "dim", "vectors"} per line) is accepted
for debugging; the loader sniffs the magic bytes.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass

import numpy as np

_MAGIC = b"CEMB"
_VERSION = 1

WIDTH_BUCKET_EDGES = (1, 2, 3, 4, 7, 15, 31, 63)  # 9 buckets: 1,2,3,4,5-7,8-15,16-31,32-63,64+
N_WIDTH_BUCKETS = 9
WIDTH_FEATURE_DIM = 20


class EmbeddingLookupError(KeyError):
    pass


@dataclass
class TokenEmbeddings:
    doc_key: str
    dim: int
    vectors: np.ndarray  # [n_tokens, dim] float64

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2 or self.vectors.shape[1] != self.dim:
            raise ValueError(f"{self.doc_key}: vector block shape {self.vectors.shape} != (*, {self.dim})")
        if not np.isfinite(self.vectors).all():
            raise ValueError(f"{self.doc_key}: non-finite embedding values")


@dataclass
class SpanRepr:
    span: tuple
    g: np.ndarray
    width_bucket: int


def bucket_width(width):
    """Bucket a width/distance >= 1 into {1,2,3,4,5-7,8-15,16-31,32-63,64+}."""
    if width < 1:
        raise ValueError(f"width/distance must be >= 1, got {width}")
    for i, edge in enumerate(WIDTH_BUCKET_EDGES):
        if width <= edge:
            return i
    return N_WIDTH_BUCKETS - 1


def hash_embeddings(doc, dim, seed):
    """Deterministic test vectors in [-1, 1], salted by (seed, token, position).

    Each token position keys a counter-based Philox stream, so the same
    (document, dim, seed) triple reproduces bit-identical vectors on any
    platform.
    """
    if dim <= 0:
        raise ValueError(f"dim must be positive, got {dim}")
    tokens = doc.tokens
    vectors = np.empty((len(tokens), dim), dtype=np.float64)
    for pos, token in enumerate(tokens):
        digest = hashlib.blake2b(
            f"{seed}|{pos}|{token}".encode("utf-8"), digest_size=16
        ).digest()
        key = int.from_bytes(digest, "little")
        gen = np.random.Generator(np.random.Philox(key=key))
        vectors[pos] = gen.uniform(-1.0, 1.0, size=dim)
    return TokenEmbeddings(doc.doc_key, dim, vectors)


def write_container(path, dim, records):
    """records: iterable of (doc_key, [n_tokens, dim] float array)."""
    entries = []
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<HHI", _VERSION, 0, dim))
        index_offset_pos = fh.tell()
        fh.write(struct.pack("<Q", 0))  # patched below
        for doc_key, vectors in records:
            vectors = np.ascontiguousarray(vectors, dtype="<f4")
            if vectors.ndim != 2 or vectors.shape[1] != dim:
                raise ValueError(f"{doc_key}: expected (*, {dim}) vectors, got {vectors.shape}")
            entries.append((doc_key, fh.tell(), vectors.shape[0]))
            fh.write(struct.pack("<I", vectors.shape[0]))
            fh.write(vectors.tobytes())
        index_offset = fh.tell()
        fh.write(struct.pack("<I", len(entries)))
        for doc_key, offset, n_tokens in entries:
            kb = doc_key.encode("utf-8")
            fh.write(struct.pack("<H", len(kb)))
            fh.write(kb)
            fh.write(struct.pack("<QI", offset, n_tokens))
        fh.seek(index_offset_pos)
        fh.write(struct.pack("<Q", index_offset))


def _read_index(fh):
    fh.seek(0)
    if fh.read(4) != _MAGIC:
        raise ValueError("not an embedding container (bad magic)")
    version, _, dim = struct.unpack("<HHI", fh.read(8))
    if version != _VERSION:
        raise ValueError(f"unsupported embedding container version {version}")
    (index_offset,) = struct.unpack("<Q", fh.read(8))
    fh.seek(index_offset)
    (n_docs,) = struct.unpack("<I", fh.read(4))
    index = {}
    for _ in range(n_docs):
        (klen,) = struct.unpack("<H", fh.read(2))
        key = fh.read(klen).decode("utf-8")
        offset, n_tokens = struct.unpack("<QI", fh.read(12))
        index[key] = (offset, n_tokens)
    return dim, index


def load_embeddings(path, doc_key):
    """Load one document's vectors from a container (or jsonlines fallback)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic == _MAGIC:
            dim, index = _read_index(fh)
            if doc_key not in index:
                raise EmbeddingLookupError(f"doc_key {doc_key!r} not present in {path}")
            offset, n_tokens = index[doc_key]
            fh.seek(offset)
            (stored,) = struct.unpack("<I", fh.read(4))
            if stored != n_tokens:
                raise ValueError(f"{doc_key}: corrupt record in {path}")
            data = np.frombuffer(fh.read(n_tokens * dim * 4), dtype="<f4")
            return TokenEmbeddings(doc_key, dim, data.reshape(n_tokens, dim))
    # jsonlines fallback
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            if obj["doc_key"] == doc_key:
                return TokenEmbeddings(doc_key, int(obj["dim"]), np.asarray(obj["vectors"]))
    raise EmbeddingLookupError(f"doc_key {doc_key!r} not present in {path}")


class HashProvider:
    """Generates hash embeddings on demand; safe for concurrent reads."""

    def __init__(self, dim, seed):
        self.dim = dim
        self.seed = seed

    def get(self, doc):
        return hash_embeddings(doc, self.dim, self.seed)


class FileProvider:
    """Serves vectors from a container file, with a preloaded index."""

    def __init__(self, path):
        self.path = path
        with open(path, "rb") as fh:
            magic = fh.read(4)
            if magic == _MAGIC:
                self.dim, self._index = _read_index(fh)
            else:
                self.dim, self._index = None, None  # jsonlines fallback, scanned per doc

    def get(self, doc):
        emb = load_embeddings(self.path, doc.doc_key)
        if self.dim is None:
            self.dim = emb.dim
        elif emb.dim != self.dim:
            raise ValueError(f"{doc.doc_key}: dim {emb.dim} != container dim {self.dim}")
        if emb.vectors.shape[0] != doc.n_tokens:
            raise ValueError(
                f"{doc.doc_key}: {emb.vectors.shape[0]} vectors for {doc.n_tokens} tokens"
            )
        return emb


def make_provider(provider, path=None, dim=64, seed=0):
    if provider == "hash":
        return HashProvider(dim, seed)
    if provider == "file":
        if not path:
            raise ValueError("file provider requires an embeddings path")
        return FileProvider(path)
    raise ValueError(f"unknown embedding provider {provider!r}")


def build_span_repr(emb, span, head_weights, width_table):
    """Assemble one span vector: [start; end; attended head; width feature].

    head_weights is the learned per-token scoring vector (dim,); attention
    over the span's token scores is softmax-normalised.  width_table is
    the [n_buckets, width_dim] feature matrix.  Mirrors the model's batched
    path; kept as a single-span reference for inspection and tests.
    """
    s, e = span
    n = emb.vectors.shape[0]
    if not (0 <= s <= e < n):
        raise ValueError(f"span ({s},{e}) out of range for {n} tokens")
    toks = emb.vectors[s : e + 1]
    scores = toks @ np.asarray(head_weights, dtype=np.float64)
    scores = scores - scores.max()
    att = np.exp(scores)
    att /= att.sum()
    head = att @ toks
    bucket = bucket_width(e - s + 1)
    g = np.concatenate([emb.vectors[s], emb.vectors[e], head, np.asarray(width_table)[bucket]])
    return SpanRepr((s, e), g, bucket)
