"""Independent brute-force implementations used as test oracles.

Everything here deliberately takes a different route than the library:
graph components instead of set-count formulas, per-mention double loops,
permutation search instead of the assignment kernel, explicit recursions
instead of folded matrix forms.
"""

from itertools import permutations

import numpy as np


# -- coreference metrics ------------------------------------------------------


def _components(cluster, other_clusters):
    """Number of connected pieces of `cluster` when mentions are joined iff
    they share a cluster on the other side (BFS over an explicit graph)."""
    nodes = list(cluster)
    where = {}
    for ci, oc in enumerate(other_clusters):
        for m in oc:
            where[m] = ci
    seen, pieces = set(), 0
    for start in nodes:
        if start in seen:
            continue
        pieces += 1
        queue = [start]
        seen.add(start)
        while queue:
            cur = queue.pop()
            for nxt in nodes:
                if nxt in seen:
                    continue
                if cur in where and nxt in where and where[cur] == where[nxt]:
                    seen.add(nxt)
                    queue.append(nxt)
    return pieces


def brute_muc(gold, pred):
    r_num = sum(len(c) - _components(c, pred) for c in gold)
    r_den = sum(len(c) - 1 for c in gold)
    p_num = sum(len(c) - _components(c, gold) for c in pred)
    p_den = sum(len(c) - 1 for c in pred)
    p = p_num / p_den if p_den else 0.0
    r = r_num / r_den if r_den else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def brute_b_cubed(gold, pred):
    def half(clusters, others):
        total, count = 0.0, 0
        for c in clusters:
            for m in c:
                count += 1
                for oc in others:
                    if m in oc:
                        # pairwise co-membership count on both sides
                        shared = sum(1 for m2 in c if m2 in oc)
                        total += shared / len(c)
                        break
        return total, count

    p_num, p_den = half(pred, gold)
    r_num, r_den = half(gold, pred)
    p = p_num / p_den if p_den else 0.0
    r = r_num / r_den if r_den else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def brute_ceaf_phi4(gold, pred):
    def phi(a, b):
        a, b = set(a), set(b)
        return 2.0 * len(a & b) / (len(a) + len(b)) if (a or b) else 0.0

    best = 0.0
    if gold and pred:
        small, large = (gold, pred) if len(gold) <= len(pred) else (pred, gold)
        for perm in permutations(range(len(large)), len(small)):
            total = sum(phi(small[i], large[j]) for i, j in enumerate(perm))
            best = max(best, total)
    p = best / len(pred) if pred else 0.0
    r = best / len(gold) if gold else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def random_partition_pair(rng, max_mentions=8, max_clusters=6):
    """Random (gold, pred) cluster sets over a shared mention universe."""
    n = int(rng.integers(1, max_mentions + 1))
    mentions = [(int(i), int(i)) for i in range(n)]

    def partition(items):
        k = int(rng.integers(1, min(max_clusters, len(items)) + 1))
        labels = rng.integers(0, k, size=len(items))
        groups = {}
        for item, lab in zip(items, labels):
            groups.setdefault(int(lab), []).append(item)
        return [tuple(sorted(g)) for g in groups.values()]

    gold_universe = [m for m in mentions if rng.random() > 0.15]
    pred_universe = [m for m in mentions if rng.random() > 0.15]
    gold = partition(gold_universe) if gold_universe else []
    pred = partition(pred_universe) if pred_universe else []
    return gold, pred


# -- entity membership --------------------------------------------------------


def brute_entity_membership(pdense, peps):
    """Direct recursion, element by element."""
    n = len(peps)
    q = np.zeros((n, n))
    for x in range(n):
        for yp in range(n):
            if yp > x:
                continue
            if yp == x:
                q[x, yp] = peps[x]
            else:
                q[x, yp] = sum(pdense[x, k] * q[k, yp] for k in range(yp, x))
    return q


def brute_ee_refined(q, g):
    """Double-loop attended entity vectors (the folded form's oracle)."""
    k, d = g.shape
    a = np.zeros((k, d))
    for x in range(k):
        for y in range(x + 1):
            e_y = np.zeros(d)
            for t in range(x + 1):
                e_y += q[t, y] * g[t]
            a[x] += q[x, y] * e_y
    return a


# -- assignment ---------------------------------------------------------------


def brute_max_assignment_value(weights):
    weights = np.asarray(weights, dtype=float)
    nr, nc = weights.shape
    best = 0.0
    if nr <= nc:
        for perm in permutations(range(nc), nr):
            best = max(best, sum(weights[i, j] for i, j in enumerate(perm)))
    else:
        for perm in permutations(range(nr), nc):
            best = max(best, sum(weights[i, j] for j, i in enumerate(perm)))
    return best


# -- link graphs --------------------------------------------------------------


def brute_components_of_links(n, decisions):
    """Connected components of the undirected link graph, via BFS."""
    adj = {i: set() for i in range(n)}
    for x, y in enumerate(decisions):
        if y >= 0:
            adj[x].add(y)
            adj[y].add(x)
    seen, comps = set(), []
    for start in range(n):
        if start in seen:
            continue
        comp, queue = [], [start]
        seen.add(start)
        while queue:
            cur = queue.pop()
            comp.append(cur)
            for nxt in adj[cur]:
                if nxt not in seen:
                    seen.add(nxt)
                    queue.append(nxt)
        comps.append(sorted(comp))
    return sorted(comps)


# -- random documents ---------------------------------------------------------


_WORDS = (
    "the a an old new big red he she it they we you him her them his their "
    "man woman dog cat house tree car city day way work key door light hand "
    "saw met found kept liked moved opened closed smiled laughed".split()
)


def random_document(rng, doc_id=0, max_sentences=5, max_sent_len=8, max_clusters=4):
    """Random Document whose same-cluster mentions never cross partially
    (bracket notation cannot express same-id crossing)."""
    from corefkit.corpus import Document

    n_sent = int(rng.integers(1, max_sentences + 1))
    sentences = [
        [str(rng.choice(_WORDS)) for _ in range(int(rng.integers(1, max_sent_len + 1)))]
        for _ in range(n_sent)
    ]
    n = sum(len(s) for s in sentences)
    speakers = [str(rng.choice(["spk1", "spk2", "-"]))] * n
    n_clusters = int(rng.integers(0, max_clusters + 1))
    used = set()
    clusters = []
    for _ in range(n_clusters):
        size = int(rng.integers(1, 4))
        cluster = []
        for _ in range(size):
            for _attempt in range(10):
                s = int(rng.integers(0, n))
                e = min(n - 1, s + int(rng.integers(0, 3)))
                if (s, e) in used:
                    continue
                crosses = any(
                    (s < s2 <= e < e2) or (s2 < s <= e2 < e) for (s2, e2) in cluster
                )
                if not crosses:
                    cluster.append((s, e))
                    used.add((s, e))
                    break
        if cluster:
            clusters.append(sorted(cluster))
    genre = str(rng.choice(["bc", "bn", "nw", "tc", "wb"]))
    return Document(
        doc_key=f"{genre}/rand/doc_{doc_id}",
        sentences=sentences,
        speakers=speakers,
        clusters=clusters,
    )
