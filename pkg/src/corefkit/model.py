"""The end-to-end scoring model.

Pipeline per document: span enumeration over external token vectors,
span representations (endpoints + attended head + width feature), mention
scoring, aggressive pruning, a bilinear coarse filter capping candidate
antecedents, full pairwise scoring with meta features, optional
higher-order refinement, and greedy decoding.  The pairwise score is
always the sum of the two mention scores and the pairwise net's output;
the dummy antecedent is fixed at 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import hoi
from .autodiff import Tensor
from .config import Config
from .corpus import KNOWN_GENRES, token_segment_ids
from .embedding import N_WIDTH_BUCKETS, bucket_width
from .nn import FFNN, EmbeddingTable, ParameterBag, gate_update, glorot
from .ranker import (
    N_SEGMENT_BUCKETS,
    AntecedentFrame,
    PredictionRecord,
    choose_antecedents,
    clusters_to_spans,
    decode_clusters,
    distance_buckets,
    enumerate_spans,
    prune_spans,
    segment_distance_buckets,
    select_candidates,
)


@dataclass
class PairMeta:
    """Per-pair meta-feature indices for one document's kept spans."""

    genre_idx: int
    same_speaker: np.ndarray  # [k, C] in {0, 1}
    dist_buckets: np.ndarray  # [k, C]
    seg_buckets: np.ndarray  # [k, C]


@dataclass
class ModelOutput:
    spans: list
    frame: AntecedentFrame  # holds the final (post-refinement) scores
    base_scores: object  # Tensor, round-1 scores
    g: object  # Tensor, round-1 span representations
    decisions_pre: np.ndarray
    decisions_post: np.ndarray
    clusters_pre: list
    clusters: list
    cluster_state: object = None
    hoi_aux_floats: int = 0
    extras: dict = field(default_factory=dict)


class CorefModel:
    def __init__(self, config: Config, seed=None):
        self.config = config
        self.seed = config.seed if seed is None else seed
        init_ss, drop_ss = np.random.SeedSequence(self.seed).spawn(2)
        rng = np.random.default_rng(init_ss)
        self.dropout_rng = np.random.default_rng(drop_ss)

        d, f = config.embed_dim, config.feature_dim
        self.g_dim = 3 * d + f
        size, depth, drop = config.ffnn_size, config.ffnn_depth, config.dropout

        bag = self.bag = ParameterBag()
        self.head_w = bag.create("head.w", glorot(rng, d, 1))
        self.width_emb = EmbeddingTable(bag, "width_emb", N_WIDTH_BUCKETS, f, rng)
        self.ffnn_m = FFNN(bag, "mention", self.g_dim, size, depth, 1, drop, rng)
        self.coarse_w = bag.create("coarse.w", glorot(rng, self.g_dim, self.g_dim))
        self.speaker_emb = EmbeddingTable(bag, "speaker_emb", 2, f, rng)
        self.genre_emb = EmbeddingTable(bag, "genre_emb", len(KNOWN_GENRES), f, rng)
        self.dist_emb = EmbeddingTable(bag, "dist_emb", N_WIDTH_BUCKETS, f, rng)
        self.segdist_emb = EmbeddingTable(bag, "segdist_emb", N_SEGMENT_BUCKETS, f, rng)
        self.ffnn_c = FFNN(bag, "pairwise", 3 * self.g_dim + 4 * f, size, depth, 1, drop, rng)
        self.gate_w = bag.create("gate.w", glorot(rng, 2 * self.g_dim, self.g_dim))
        self.ffnn_alpha = FFNN(bag, "cluster_attn", self.g_dim, size, depth, 1, drop, rng)
        self.cluster_size_emb = EmbeddingTable(
            bag, "cluster_size_emb", hoi.N_CLUSTER_SIZE_BUCKETS, f, rng
        )
        self.ffnn_fc = FFNN(bag, "cluster_compat", 3 * self.g_dim + f, size, depth, 1, drop, rng)

    # -- components ---------------------------------------------------------

    def mention_score(self, g, train=False):
        return self.ffnn_m(g, train=train, rng=self.dropout_rng)

    def antecedent_score(self, g_x, g_y, phi, train=False):
        """Pairwise-net score s_c for explicit rows (reference path; the
        batched pipeline goes through _pair_scores)."""
        x = ad.concat([g_x, g_y, ad.mul(g_x, g_y), phi], axis=1)
        return self.ffnn_c(x, train=train, rng=self.dropout_rng)

    def span_representations(self, doc, emb, train=False):
        """Batched span vectors for every enumerated span of the document."""
        cfg = self.config
        starts, ends = enumerate_spans(doc.sentence_bounds(), cfg.max_span_width)
        n = starts.shape[0]
        vecs = Tensor(emb.vectors)
        head_scores = ad.matmul(vecs, self.head_w)  # [N, 1]
        w = cfg.max_span_width
        widths = ends - starts + 1
        offsets = np.arange(w)[None, :]
        tok_mask = offsets < widths[:, None]
        tok_idx = np.where(tok_mask, starts[:, None] + offsets, -1)
        safe = np.maximum(tok_idx, 0)
        span_logits = ad.reshape(ad.gather_rows(head_scores, safe.ravel()), (n, w))
        att = ad.masked_softmax(span_logits, tok_mask, axis=1)
        head_vecs = ad.weighted_gather_sum(vecs, tok_idx, att)
        start_vecs = ad.gather_rows(vecs, starts)
        end_vecs = ad.gather_rows(vecs, ends)
        width_feats = self.width_emb([bucket_width(int(x)) for x in widths])
        g = ad.concat([start_vecs, end_vecs, head_vecs, width_feats], axis=1)
        return starts, ends, g

    def _pair_meta(self, doc, spans, cand_idx, kept, starts):
        speakers = doc.speakers
        genre = doc.genre if doc.genre in KNOWN_GENRES else "xx"
        genre_idx = KNOWN_GENRES.index(genre)
        ids: dict = {}
        span_speaker = np.asarray(
            [ids.setdefault(speakers[s], len(ids)) for (s, _) in spans], dtype=np.int64
        )
        safe = np.maximum(cand_idx, 0)
        same_speaker = (span_speaker[:, None] == span_speaker[safe]).astype(np.int64)
        seg_ids = token_segment_ids(doc, self.config.max_seg_len)
        return PairMeta(
            genre_idx=genre_idx,
            same_speaker=same_speaker,
            dist_buckets=distance_buckets(cand_idx),
            seg_buckets=segment_distance_buckets(seg_ids, starts, cand_idx, kept),
        )

    def _pair_scores(self, g, sm, cand_idx, cand_mask, meta, train):
        """Full score rows [k, C+1]: s_m(x) + s_m(y) + pairwise net, dummy 0."""
        k, c = cand_idx.shape
        safe = np.maximum(cand_idx, 0)
        xs = np.repeat(np.arange(k), c)
        g_x = ad.gather_rows(g, xs)
        g_y = ad.gather_rows(g, safe.ravel())
        phi = ad.concat(
            [
                self.speaker_emb(meta.same_speaker.ravel()),
                self.genre_emb(np.full(k * c, meta.genre_idx, dtype=np.int64)),
                self.dist_emb(meta.dist_buckets.ravel()),
                self.segdist_emb(meta.seg_buckets.ravel()),
            ],
            axis=1,
        )
        pair_in = ad.concat([g_x, g_y, ad.mul(g_x, g_y), phi], axis=1)
        s_c = ad.reshape(self.ffnn_c(pair_in, train=train, rng=self.dropout_rng), (k, c))
        s_m_y = ad.reshape(ad.gather_rows(sm, safe.ravel()), (k, c))
        cand_scores = ad.add(ad.add(s_c, s_m_y), sm)  # sm is [k, 1], broadcasts over columns
        return ad.concat([cand_scores, Tensor(np.zeros((k, 1)))], axis=1)

    # -- full pipeline ------------------------------------------------------

    def forward(self, doc, emb, train=False, hoi_method=None, gate_override=None):
        cfg = self.config
        method = cfg.hoi_method if hoi_method is None else hoi_method
        if emb.vectors.shape[0] != doc.n_tokens:
            raise ValueError(
                f"{doc.doc_key}: {emb.vectors.shape[0]} vectors for {doc.n_tokens} tokens"
            )
        if doc.n_tokens == 0:
            empty = AntecedentFrame([], np.empty((0, 1), np.int64), np.empty((0, 1), bool),
                                    Tensor(np.zeros((0, 2))))
            return ModelOutput([], empty, empty.scores, Tensor(np.zeros((0, self.g_dim))),
                               np.empty(0, np.int64), np.empty(0, np.int64), [], [])

        starts, ends, g_all = self.span_representations(doc, emb, train)
        sm_all = self.mention_score(g_all, train)
        span_cap = cfg.span_cap
        if method == "ee":
            span_cap = min(span_cap, cfg.ee_max_spans)
        kept = prune_spans(starts, ends, sm_all.data[:, 0], cfg.prune_ratio, doc.n_tokens, span_cap)
        spans = [(int(starts[i]), int(ends[i])) for i in kept]
        k = kept.shape[0]
        g = ad.gather_rows(g_all, kept)
        sm = ad.gather_rows(sm_all, kept)

        coarse = sm.data + sm.data.T + g.data @ self.coarse_w.data @ g.data.T
        cand_idx, cand_mask = select_candidates(coarse, cfg.max_antecedents)
        meta = self._pair_meta(doc, spans, cand_idx, kept, starts)
        base_scores = self._pair_scores(g, sm, cand_idx, cand_mask, meta, train)
        frame = AntecedentFrame(spans, cand_idx, cand_mask, base_scores)

        final_scores = base_scores
        cluster_state = None
        aux_floats = 0
        if k > 0 and method in ("aa", "ee", "sc") and cfg.hoi_rounds > 0:
            cur_g, cur_scores = g, base_scores
            for _ in range(cfg.hoi_rounds):
                p = ad.masked_softmax(cur_scores, frame.full_mask)
                if method == "aa":
                    rr = hoi.refine_aa(cur_g, p, cand_idx, cand_mask, self.gate_w, gate_override)
                elif method == "ee":
                    rr, _ = hoi.refine_ee(cur_g, p, cand_idx, cand_mask, self.gate_w, gate_override)
                else:
                    rr, _ = hoi.refine_sc(
                        cur_g, cur_scores.data, frame, self.ffnn_alpha, self.gate_w,
                        train=train, rng=self.dropout_rng, gate_override=gate_override,
                    )
                aux_floats = max(aux_floats, rr.aux_floats)
                cur_g = rr.g_refined
                cur_sm = self.mention_score(cur_g, train)
                cur_scores = self._pair_scores(cur_g, cur_sm, cand_idx, cand_mask, meta, train)
            final_scores = cur_scores
        elif k > 0 and method == "cm":
            final_scores, cluster_state, _, aux_floats = hoi.rank_cm(
                g, base_scores, frame, self,
                order=cfg.cm_order, reduce=cfg.cm_reduce,
                train=train, rng=self.dropout_rng,
            )

        frame = AntecedentFrame(spans, cand_idx, cand_mask, final_scores)
        decisions_pre = choose_antecedents(base_scores.data, cand_idx, cand_mask)
        decisions_post = choose_antecedents(final_scores.data, cand_idx, cand_mask)
        return ModelOutput(
            spans=spans,
            frame=frame,
            base_scores=base_scores,
            g=g,
            decisions_pre=decisions_pre,
            decisions_post=decisions_post,
            clusters_pre=clusters_to_spans(decode_clusters(decisions_pre, k), spans),
            clusters=clusters_to_spans(decode_clusters(decisions_post, k), spans),
            cluster_state=cluster_state,
            hoi_aux_floats=aux_floats,
        )

    def predict(self, doc, emb, hoi_method=None, gate_override=None):
        out = self.forward(doc, emb, train=False, hoi_method=hoi_method, gate_override=gate_override)
        return PredictionRecord(
            doc_key=doc.doc_key,
            spans=out.spans,
            antecedents_pre=list(out.decisions_pre),
            antecedents_post=list(out.decisions_post),
            clusters=out.clusters,
            clusters_pre=out.clusters_pre,
        )


def predict_corpus(model, docs, provider, hoi_method=None, jobs=1):
    """Prediction records for every document, in input order.

    Scoring only reads parameters, so documents can run on a thread pool.
    """
    if jobs <= 1:
        return [model.predict(doc, provider.get(doc), hoi_method=hoi_method) for doc in docs]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=jobs) as pool:
        futures = [
            pool.submit(model.predict, doc, provider.get(doc), hoi_method) for doc in docs
        ]
        return [f.result() for f in futures]
