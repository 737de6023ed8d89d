"""Higher-order inference: four ways to propagate information beyond
pairwise antecedent decisions.

Three span-refinement methods produce a refined vector a_x and gate it
into the span representation (attended antecedent over the current
distribution; soft entity-membership equalization; hard span clustering
with per-cluster attention), after which the model runs another ranking
round.  Cluster merging instead ranks spans sequentially while growing
hard clusters, adding a learned cluster-compatibility score on top of the
pairwise score.

Each refinement records `aux_floats`, the number of float64 cells its
method-specific intermediates allocate: the equalization method is
quadratic in the number of kept spans, the other three stay linear, and
the tests assert that scaling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .nn import gate_update
from .ranker import UnionFind, choose_antecedents, decode_clusters

CLUSTER_SIZE_EDGES = (1, 2, 3, 4, 7)  # 6 buckets: 1,2,3,4,5-7,8+
N_CLUSTER_SIZE_BUCKETS = 6


def bucket_cluster_size(size):
    for i, edge in enumerate(CLUSTER_SIZE_EDGES):
        if size <= edge:
            return i
    return N_CLUSTER_SIZE_BUCKETS - 1


@dataclass
class RefinedReprs:
    a: Tensor  # refined representation per span
    g_refined: Tensor  # gated update, same shape as the input reprs
    aux_floats: int  # method-specific intermediate allocation, in float64 cells


@dataclass
class EntityMembership:
    """Soft membership Q[x, y'] of span x in the entity opened by span y'."""

    q: Tensor  # [k, k], lower-triangular incl. diagonal, rows sum to 1

    def entity_vectors(self, x, g_data):
        """Entity vectors e_y^{(x)} accumulated up to span x, on demand.

        Materialising these for every x would be cubic; refinement folds
        them into Q Q^T instead, so this is an inspection helper.
        """
        q = self.q.data
        return q[: x + 1, : x + 1].T @ g_data[: x + 1]


def _dense_antecedent_mass(p, cand_idx, k):
    """Scatter candidate-column mass [k, C] into kept-span space [k, k]."""
    c = cand_idx.shape[1]
    pcand = ad.slice_cols(p, 0, c)
    return ad.scatter_columns(pcand, cand_idx, k)


def refine_aa(g, p, cand_idx, cand_mask, w_gate, gate_override=None):
    """Attended antecedent: a_x is the P-weighted sum of candidate vectors,
    with the dummy share attending to the span itself."""
    k, d = g.data.shape
    c = cand_idx.shape[1]
    pcand = ad.slice_cols(p, 0, c)
    peps = ad.slice_cols(p, c, c + 1)
    attended = ad.weighted_gather_sum(g, np.where(cand_mask, cand_idx, -1), pcand)
    a = ad.add(attended, ad.mul(peps, g))
    refined = gate_update(g, a, w_gate, override=gate_override)
    aux = 2 * k * d + 2 * k * c  # attended + a, candidate mass + weight grads
    return RefinedReprs(a, refined, aux)


def compute_q(p, cand_idx, k):
    """Soft entity membership from the antecedent distribution (kept-span
    index space; candidates pruned below a span's window carry no mass)."""
    c = cand_idx.shape[1]
    pdense = _dense_antecedent_mass(p, cand_idx, k)
    peps_col = ad.slice_cols(p, c, c + 1)
    peps = ad.reshape(peps_col, (-1,))
    q = ad.entity_membership(pdense, peps)
    return EntityMembership(q)


def refine_ee(g, p, cand_idx, cand_mask, w_gate, gate_override=None):
    """Entity equalization: a_x attends over entity vectors weighted by the
    soft membership Q; folds to (lower-triangular Q Q^T) @ g."""
    k, d = g.data.shape
    membership = compute_q(p, cand_idx, k)
    q = membership.q
    pair = ad.matmul(q, ad.transpose(q))
    tril = np.tril(np.ones((k, k)))
    masked = ad.mul(pair, Tensor(tril))
    a = ad.matmul(masked, g)
    refined = gate_update(g, a, w_gate, override=gate_override)
    aux = 4 * k * k + k * d  # dense mass, Q, Q Q^T, tril mask; then a
    return RefinedReprs(a, refined, aux), membership


def refine_sc(g, scores_np, frame, alpha_ffnn, w_gate, train=False, rng=None, gate_override=None):
    """Span clustering: decode hard clusters from the current scores
    (singletons kept as their own clusters), attend within each cluster,
    and assign each span its cluster vector.

    Gradients do not flow through the hard cluster assignment, only
    through the attention and the span vectors.
    """
    k, d = g.data.shape
    decisions = choose_antecedents(scores_np, frame.cand_idx, frame.cand_mask)
    clusters = decode_clusters(decisions, k, min_size=1)
    cluster_ids = np.empty(k, dtype=np.int64)
    for ci, members in enumerate(clusters):
        for m in members:
            cluster_ids[m] = ci
    nc = len(clusters)
    logits = alpha_ffnn(g, train=train, rng=rng)  # [k, 1]
    alpha = ad.segment_softmax(logits, cluster_ids, nc)
    weighted = ad.mul(alpha, g)
    entity_vecs = ad.segment_sum(weighted, cluster_ids, nc)
    a = ad.gather_rows(entity_vecs, cluster_ids)
    refined = gate_update(g, a, w_gate, override=gate_override)
    aux = 2 * k + nc * d + 2 * k * d  # alpha cells, entity vectors, weighted + a
    return RefinedReprs(a, refined, aux), cluster_ids


@dataclass
class ClusterState:
    """Hard clusters over kept-span ordinals, singletons included."""

    clusters: list  # list[list[int]]

    def partition_ok(self, k):
        seen = sorted(i for c in self.clusters for i in c)
        return seen == list(range(k))


def _cluster_rep(g_data, members, reduce):
    block = g_data[members]
    return block.max(axis=0) if reduce == "max" else block.mean(axis=0)


def rank_cm(g, base_scores, frame, nets, order="sequential", reduce="max", train=False, rng=None):
    """Sequential antecedent ranking that grows clusters while scoring.

    Visits spans in document order or easy-first order (descending max
    base antecedent score, ties to the earlier span).  Each span's row is
    the base pairwise score plus a cluster-compatibility score against
    every candidate whose cluster has outgrown its initial singleton (the
    compatibility net is suppressed on initial clusters so it stays a pure
    consultation signal); the argmax link, if not the dummy, merges the
    two clusters.  Cluster vectors are element-wise mean- or max-reduced
    over member spans and treated as constants: gradients flow through the
    score arithmetic only, not the merge decisions.

    nets: object with ffnn_fc(x, train, rng) and cluster_size_emb(idx).
    Returns (final scores [k, C+1], ClusterState, decisions, aux_floats).
    """
    k = frame.k
    c = frame.dummy_col
    cand_idx, cand_mask = frame.cand_idx, frame.cand_mask
    base_np = base_scores.data

    if order == "sequential":
        visit = np.arange(k)
    elif order == "easy_first":
        masked = np.where(cand_mask, base_np[:, :c], -np.inf)
        max_score = np.where(cand_mask.any(axis=1), masked.max(axis=1, initial=-np.inf), -np.inf)
        visit = np.lexsort((np.arange(k), -max_score))
    else:
        raise ValueError(f"unknown ranking order {order!r}")
    if reduce not in ("mean", "max"):
        raise ValueError(f"unknown cluster reduction {reduce!r}")

    uf = UnionFind(k)
    members = {i: [i] for i in range(k)}
    rows = [None] * k
    decisions = np.full(k, -1, dtype=np.int64)
    peak_aux = 0

    for x in visit:
        row = ad.gather_rows(base_scores, np.asarray([x]))
        cands = cand_idx[x][cand_mask[x]]
        cols = np.flatnonzero(cand_mask[x])
        grown, grown_cols, sizes = [], [], []
        for col, y in zip(cols, cands):
            root = uf.find(int(y))
            if len(members[root]) > 1:
                grown.append(root)
                grown_cols.append(col)
                sizes.append(len(members[root]))
        if grown:
            m = len(grown)
            reps = np.stack([_cluster_rep(g.data, members[r], reduce) for r in grown])
            gx = ad.gather_rows(g, np.asarray([x]))
            gxb = ad.broadcast_rows(gx, m)
            reps_t = Tensor(reps)
            size_feats = nets.cluster_size_emb([bucket_cluster_size(s) for s in sizes])
            pair_in = ad.concat([gxb, reps_t, ad.mul(gxb, reps_t), size_feats], axis=1)
            fc = nets.ffnn_fc(pair_in, train=train, rng=rng)  # [m, 1]
            onehot = np.zeros((m, c + 1))
            onehot[np.arange(m), grown_cols] = 1.0
            row = ad.add(row, ad.matmul(ad.transpose(fc), Tensor(onehot)))
            peak_aux = max(peak_aux, m * (pair_in.data.shape[1] + c + 2))
        rows[x] = row
        decision = choose_antecedents(row.data, cand_idx[x : x + 1], cand_mask[x : x + 1])[0]
        decisions[x] = decision
        if decision >= 0:
            rx, ry = uf.find(int(x)), uf.find(int(decision))
            if rx != ry:
                merged = members.pop(ry) + members.pop(rx)
                uf.union(rx, ry)
                members[uf.find(rx)] = sorted(merged)

    final = ad.concat(rows, axis=0)
    state = ClusterState(sorted(sorted(v) for v in members.values()))
    aux = peak_aux + k * (c + 1)
    return final, state, decisions, aux
