"""Coreference evaluation: MUC, B-cubed, entity-alignment CEAF (phi4) and
their averaged F1.

Conventions follow the reference CoNLL-2012 scorer (post-2014 corrected
semantics), which the literature assumes silently:
  - 0/0 ratios are defined as 0.
  - MUC: link-based; each cluster contributes |S| - (number of partitions
    of S under the other side), singletons contribute nothing.
  - B-cubed: per-mention overlap; a mention absent from the other side
    contributes 0 to that side's numerator but still counts in the
    denominator ("twinless" mentions score zero for that side).
  - CEAF phi4(K, R) = 2|K n R| / (|K| + |R|) under the optimal one-to-one
    cluster alignment (maximum-weight bipartite matching).
Corpus scores sum numerators/denominators over documents, never averaging
per-document F1s.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .kernels import max_assignment


def _ratio(num, den):
    return num / den if den > 0 else 0.0


def _f1(p, r):
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


@dataclass
class MetricParts:
    """P/R numerators and denominators, summable across documents."""

    p_num: float = 0.0
    p_den: float = 0.0
    r_num: float = 0.0
    r_den: float = 0.0

    def __iadd__(self, other):
        self.p_num += other.p_num
        self.p_den += other.p_den
        self.r_num += other.r_num
        self.r_den += other.r_den
        return self

    def prf(self):
        p, r = _ratio(self.p_num, self.p_den), _ratio(self.r_num, self.r_den)
        return p, r, _f1(p, r)


def _mention_map(clusters):
    mapping = {}
    for ci, cluster in enumerate(clusters):
        for m in cluster:
            mapping[m] = ci
    return mapping


def _muc_half(clusters, other_map):
    num = den = 0
    for cluster in clusters:
        seen = set()
        unaligned = 0
        for m in cluster:
            if m in other_map:
                seen.add(other_map[m])
            else:
                unaligned += 1
        num += len(cluster) - unaligned - len(seen)
        den += len(cluster) - 1
    return num, den


def muc_parts(gold, pred):
    r_num, r_den = _muc_half(gold, _mention_map(pred))
    p_num, p_den = _muc_half(pred, _mention_map(gold))
    return MetricParts(p_num, p_den, r_num, r_den)


def _b_cubed_half(clusters, other_clusters, other_map):
    num = 0.0
    count = 0
    for cluster in clusters:
        cset = set(cluster)
        for m in cluster:
            count += 1
            oc = other_map.get(m)
            if oc is not None:
                num += len(cset & set(other_clusters[oc])) / len(cset)
    return num, count


def b_cubed_parts(gold, pred):
    gold_map, pred_map = _mention_map(gold), _mention_map(pred)
    p_num, p_den = _b_cubed_half(pred, gold, gold_map)
    r_num, r_den = _b_cubed_half(gold, pred, pred_map)
    return MetricParts(p_num, p_den, r_num, r_den)


def phi4(a, b):
    a, b = set(a), set(b)
    if not a and not b:
        return 0.0
    return 2.0 * len(a & b) / (len(a) + len(b))


def ceaf_phi4_parts(gold, pred):
    if gold and pred:
        weights = np.asarray([[phi4(g, p) for p in pred] for g in gold])
        rows, cols = max_assignment(weights)
        total = float(weights[rows, cols].sum())
    else:
        total = 0.0
    return MetricParts(total, len(pred), total, len(gold))


def muc(gold, pred):
    return muc_parts(gold, pred).prf()


def b_cubed(gold, pred):
    return b_cubed_parts(gold, pred).prf()


def ceaf_phi4(gold, pred):
    return ceaf_phi4_parts(gold, pred).prf()


_METRICS = (("muc", muc_parts), ("b_cubed", b_cubed_parts), ("ceaf_phi4", ceaf_phi4_parts))


@dataclass
class MetricsReport:
    muc: tuple
    b_cubed: tuple
    ceaf_phi4: tuple
    avg_f1: float

    def to_json(self):
        out = {}
        for name in ("muc", "b_cubed", "ceaf_phi4"):
            p, r, f = getattr(self, name)
            out[name] = {"precision": p, "recall": r, "f1": f}
        out["avg_f1"] = self.avg_f1
        return out

    @classmethod
    def from_json(cls, obj):
        vals = [
            (obj[n]["precision"], obj[n]["recall"], obj[n]["f1"])
            for n in ("muc", "b_cubed", "ceaf_phi4")
        ]
        return cls(*vals, avg_f1=obj["avg_f1"])


def avg_f1(report):
    return report.avg_f1


class CorefScorer:
    """Accumulates per-document metric parts into a corpus report."""

    def __init__(self):
        self.parts = {name: MetricParts() for name, _ in _METRICS}

    def update(self, gold_clusters, pred_clusters):
        gold = [tuple(sorted(c)) for c in gold_clusters if c]
        pred = [tuple(sorted(c)) for c in pred_clusters if c]
        for name, fn in _METRICS:
            self.parts[name] += fn(gold, pred)

    def report(self):
        prf = {name: self.parts[name].prf() for name, _ in _METRICS}
        mean = sum(v[2] for v in prf.values()) / 3.0
        return MetricsReport(prf["muc"], prf["b_cubed"], prf["ceaf_phi4"], mean)


def evaluate_corpus(gold_by_key, pred_by_key):
    """Score predicted clusters against gold, paired by doc_key.

    Documents missing from the prediction side score as empty responses;
    predictions without a gold document are an error.
    """
    extra = set(pred_by_key) - set(gold_by_key)
    if extra:
        raise KeyError(f"predictions for unknown documents: {sorted(extra)[:3]}")
    scorer = CorefScorer()
    for key in sorted(gold_by_key):
        scorer.update(gold_by_key[key], pred_by_key.get(key, []))
    return scorer.report()


def write_report(path, report):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")
