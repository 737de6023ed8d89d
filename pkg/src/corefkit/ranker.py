"""Span enumeration, aggressive pruning, antecedent frames, and greedy
cluster decoding.

All span sets are kept in document order (by start, then end).  The dummy
antecedent (discourse-new, scored exactly 0) occupies the last column of
every score row; argmax ties prefer the dummy, then the nearest
antecedent, which makes decoding deterministic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .embedding import bucket_width

N_SEGMENT_BUCKETS = 5  # segment distance clipped into {0, 1, 2, 3, 4+}


def enumerate_spans(sentence_bounds, max_width):
    """All intra-sentence spans of width <= max_width, document-ordered.

    Returns (starts, ends) as int64 arrays with inclusive end indices.
    """
    if max_width < 1:
        raise ValueError(f"max_width must be >= 1, got {max_width}")
    starts, ends = [], []
    for (a, b) in sentence_bounds:
        for s in range(a, b):
            for e in range(s, min(s + max_width, b)):
                starts.append(s)
                ends.append(e)
    order = np.lexsort((np.asarray(ends), np.asarray(starts))) if starts else np.empty(0, np.int64)
    return (
        np.asarray(starts, dtype=np.int64)[order],
        np.asarray(ends, dtype=np.int64)[order],
    )


def prune_spans(starts, ends, mention_scores, ratio, n_tokens, cap):
    """Keep the top min(ceil(ratio*n_tokens), cap) spans by mention score.

    Spans are accepted in descending score order (ties to the earlier
    span) while rejecting any span that crosses an already-accepted one.
    Returns kept span indices in document order.
    """
    n = starts.shape[0]
    limit = min(int(np.ceil(ratio * n_tokens)), cap, n)
    if limit <= 0:
        return np.empty(0, dtype=np.int64)
    order = np.argsort(-np.asarray(mention_scores, dtype=np.float64), kind="stable")
    kept = kernels.prune_accept(starts, ends, order.astype(np.int64), limit)
    return np.flatnonzero(kept).astype(np.int64)


def select_candidates(coarse_scores, max_antecedents):
    """Per-span top-K preceding candidates by coarse score.

    coarse_scores: [k, k], row x scored against all earlier spans (the
    upper triangle incl. diagonal is ignored).  Returns (cand_idx,
    cand_mask) of shape [k, C] with candidate columns sorted by span
    index ascending and -1 padding.
    """
    k = coarse_scores.shape[0]
    width = min(max_antecedents, max(k - 1, 1)) if k else 1
    cand_idx = np.full((k, width), -1, dtype=np.int64)
    for x in range(1, k):
        c = min(max_antecedents, x)
        row = coarse_scores[x, :x]
        if x <= max_antecedents:
            chosen = np.arange(x)
        else:
            top = np.argpartition(-row, c - 1)[:c]
            chosen = np.sort(top)
        cand_idx[x, : chosen.shape[0]] = chosen
    return cand_idx, cand_idx >= 0


def distance_buckets(cand_idx):
    """Antecedent-distance buckets over kept-span ordinals (distance >= 1)."""
    k, width = cand_idx.shape
    x_idx = np.broadcast_to(np.arange(k)[:, None], (k, width))
    dist = np.where(cand_idx >= 0, x_idx - cand_idx, 1)
    return np.vectorize(bucket_width, otypes=[np.int64])(np.maximum(dist, 1))


def segment_distance_buckets(seg_ids, starts, cand_idx, kept):
    """Segment-distance buckets for each (span, candidate) pair."""
    seg_of_span = np.asarray([seg_ids[starts[i]] for i in kept], dtype=np.int64)
    safe = np.maximum(cand_idx, 0)
    diff = seg_of_span[:, None] - seg_of_span[safe]
    return np.clip(diff, 0, N_SEGMENT_BUCKETS - 1)


@dataclass
class AntecedentFrame:
    """Scores and candidate structure over the kept spans of one document."""

    spans: list  # [(start, end)] kept spans, document order
    cand_idx: np.ndarray  # [k, C] kept-span ordinals, -1 padded
    cand_mask: np.ndarray  # [k, C] bool
    scores: object  # Tensor [k, C+1]; last column is the dummy, fixed 0
    full_mask: np.ndarray = field(init=False)  # [k, C+1] bool

    def __post_init__(self):
        k, width = self.cand_mask.shape
        self.full_mask = np.concatenate([self.cand_mask, np.ones((k, 1), dtype=bool)], axis=1)

    @property
    def k(self):
        return len(self.spans)

    @property
    def dummy_col(self):
        return self.cand_mask.shape[1]


def choose_antecedents(scores, cand_idx, cand_mask):
    """Per-span argmax decision: kept-span ordinal of the link, -1 for dummy.

    Ties prefer the dummy, then the nearest (largest-ordinal) candidate.
    """
    scores = np.asarray(scores, dtype=np.float64)
    k, width_plus = scores.shape
    decisions = np.full(k, -1, dtype=np.int64)
    dummy = width_plus - 1
    for x in range(k):
        row = np.where(np.concatenate([cand_mask[x], [True]]), scores[x], -np.inf)
        best = row.max()
        if row[dummy] >= best:
            continue
        tied = np.flatnonzero(row[:dummy] >= best)
        decisions[x] = cand_idx[x, tied.max()]
    return decisions


class UnionFind:
    """Disjoint sets over range(n) with path compression + union by rank."""

    def __init__(self, n):
        self.parent = list(range(n))
        self.rank = [0] * n

    def find(self, x):
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, x, y):
        rx, ry = self.find(x), self.find(y)
        if rx == ry:
            return False
        if self.rank[rx] < self.rank[ry]:
            rx, ry = ry, rx
        self.parent[ry] = rx
        if self.rank[rx] == self.rank[ry]:
            self.rank[rx] += 1
        return True

    def groups(self):
        out = {}
        for x in range(len(self.parent)):
            out.setdefault(self.find(x), []).append(x)
        return [sorted(v) for _, v in sorted(out.items())]


def decode_clusters(decisions, n, min_size=2):
    """Transitive closure of antecedent links into clusters of ordinals.

    Links are symmetric under union-find, so chains b->a, c->b land in one
    cluster.  Clusters below min_size are dropped (set min_size=1 to keep
    singletons, as span-clustering refinement does).
    """
    uf = UnionFind(n)
    for x, y in enumerate(decisions):
        if y >= 0:
            if y >= x:
                raise ValueError(f"antecedent {y} does not precede span {x}")
            uf.union(x, y)
    return [g for g in uf.groups() if len(g) >= min_size]


def clusters_to_spans(clusters, spans):
    return [[tuple(spans[i]) for i in cluster] for cluster in clusters]


@dataclass
class PredictionRecord:
    """Per-document prediction dump row (the analysis module's input)."""

    doc_key: str
    spans: list  # kept spans, document order
    antecedents_pre: list  # span ordinal or -1, before refinement
    antecedents_post: list  # span ordinal or -1, after refinement
    clusters: list  # final predicted clusters, as token spans
    clusters_pre: list  # clusters decoded from the pre-refinement scores

    def to_json(self):
        return {
            "doc_key": self.doc_key,
            "spans": [[int(s), int(e)] for (s, e) in self.spans],
            "antecedents_pre": [int(a) for a in self.antecedents_pre],
            "antecedents_post": [int(a) for a in self.antecedents_post],
            "clusters": [[[int(s), int(e)] for (s, e) in c] for c in self.clusters],
            "clusters_pre": [[[int(s), int(e)] for (s, e) in c] for c in self.clusters_pre],
        }

    @classmethod
    def from_json(cls, obj):
        return cls(
            doc_key=obj["doc_key"],
            spans=[(int(s), int(e)) for (s, e) in obj["spans"]],
            antecedents_pre=[int(a) for a in obj["antecedents_pre"]],
            antecedents_post=[int(a) for a in obj["antecedents_post"]],
            clusters=[[(int(s), int(e)) for (s, e) in c] for c in obj["clusters"]],
            clusters_pre=[[(int(s), int(e)) for (s, e) in c] for c in obj["clusters_pre"]],
        )


def write_predictions(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_json(), sort_keys=True) + "\n")


def read_predictions(path):
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                records.append(PredictionRecord.from_json(json.loads(line)))
    return records
