"""Impact analyses for higher-order inference: the on/off ablation, the
link-change accounting between two decision passes, and pronoun
resolution error profiling."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

from .trainer import evaluate_model

DEFAULT_LEXICON = {
    "singular": ["he", "him", "his", "she", "her", "hers", "it", "its", "i", "me", "my", "mine"],
    "plural": ["they", "them", "their", "theirs", "we", "us", "our", "ours"],
    "ambiguous": ["you", "your", "yours"],
}


@dataclass(frozen=True)
class PronounLexicon:
    singular: frozenset
    plural: frozenset
    ambiguous: frozenset

    @classmethod
    def default(cls):
        return cls.from_dict(DEFAULT_LEXICON)

    @classmethod
    def from_dict(cls, data):
        return cls(
            singular=frozenset(w.lower() for w in data["singular"]),
            plural=frozenset(w.lower() for w in data["plural"]),
            ambiguous=frozenset(w.lower() for w in data.get("ambiguous", [])),
        )

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def kind(self, text):
        """'singular' | 'plural' | 'ambiguous' | None for a mention string."""
        word = text.lower()
        if word in self.ambiguous:
            return "ambiguous"
        if word in self.singular:
            return "singular"
        if word in self.plural:
            return "plural"
        return None


@dataclass
class LinkChangeReport:
    w2c: int = 0
    c2w: int = 0
    c2c: int = 0
    w2w: int = 0

    @property
    def total(self):
        return self.w2c + self.c2w + self.c2c + self.w2w

    def to_json(self):
        total = self.total
        return {
            "w2c": self.w2c,
            "c2w": self.c2w,
            "c2c": self.c2c,
            "w2w": self.w2w,
            "pct_w2c": 100.0 * self.w2c / total if total else 0.0,
            "pct_c2w": 100.0 * self.c2w / total if total else 0.0,
        }


@dataclass
class PronounReport:
    sp: int = 0
    ps: int = 0
    fl: int = 0
    wl: int = 0
    bc: int = 0
    bc_ambiguous: int = 0

    def to_json(self):
        return {
            "sp": self.sp,
            "ps": self.ps,
            "fl": self.fl,
            "wl": self.wl,
            "bc": self.bc,
            "bc_ambiguous": self.bc_ambiguous,
        }


def hoi_off_eval(model, docs, provider):
    """Evaluate a trained model with refinement on, then again with the
    refinement pass disabled (first-round scores used directly; the
    cluster-merging compatibility score suppressed), on one set of
    parameters.  Returns {'avg_f1_on', 'avg_f1_off', 'drop'} with
    drop = on - off (signed)."""
    if model.config.hoi_method == "none":
        warnings.warn("model was trained without higher-order inference; toggle is a no-op")
        score = evaluate_model(model, docs, provider).avg_f1
        return {"avg_f1_on": score, "avg_f1_off": score, "drop": 0.0}
    on = evaluate_model(model, docs, provider).avg_f1
    off = evaluate_model(model, docs, provider, hoi_method="none").avg_f1
    return {"avg_f1_on": on, "avg_f1_off": off, "drop": on - off}


class AlignmentError(ValueError):
    """Decision dumps cover different documents or span sets."""


def _gold_cluster_ids(gold_clusters):
    mapping = {}
    for ci, cluster in enumerate(gold_clusters):
        for m in cluster:
            mapping[tuple(m)] = ci
    return mapping


def link_change(before, after, gold_by_key, include_nongold=True):
    """Classify every mention linked in both passes as W2C/C2W/C2C/W2W.

    before/after: dict doc_key -> (spans, antecedent ordinals, -1 = none).
    A decision is Correct when the mention and its chosen antecedent are
    spans of the same gold cluster.  With include_nongold, mentions that
    match no gold span still count (their links are Wrong by definition);
    otherwise they are skipped.
    """
    if set(before) != set(after):
        raise AlignmentError(
            f"decision dumps cover different documents: {sorted(set(before) ^ set(after))[:3]}"
        )
    report = LinkChangeReport()
    for key in sorted(before):
        spans_b, dec_b = before[key]
        spans_a, dec_a = after[key]
        if list(spans_b) != list(spans_a):
            raise AlignmentError(f"{key}: span sets differ between passes")
        gold = _gold_cluster_ids(gold_by_key.get(key, []))
        spans = [tuple(s) for s in spans_b]
        for x, (db, da) in enumerate(zip(dec_b, dec_a)):
            if db < 0 or da < 0:
                continue
            cid = gold.get(spans[x])
            if cid is None and not include_nongold:
                continue
            correct_b = cid is not None and gold.get(spans[db]) == cid
            correct_a = cid is not None and gold.get(spans[da]) == cid
            if correct_b and correct_a:
                report.c2c += 1
            elif correct_b:
                report.c2w += 1
            elif correct_a:
                report.w2c += 1
            else:
                report.w2w += 1
    return report


def _mention_text(tokens, span):
    s, e = span
    return " ".join(tokens[s : e + 1])


def pronoun_analysis(records, gold_docs, lexicon=None):
    """Profile pronoun-pair links and mixed-plurality clusters.

    Counted links are predicted (anaphor -> antecedent) pairs where both
    mentions are personal pronouns from the lexicon; ambiguous pronouns
    are excluded from the direct link counts and only enter the
    mixed-cluster sub-count.

      sp/ps: links between pronouns of different plurality
      fl:    the anaphor pronoun matches no gold mention (false link)
      wl:    the anaphor is gold but its pronoun antecedent is not
             gold-coreferent with it (wrong link)
      bc:    predicted clusters holding both singular and plural pronouns
             (bc_ambiguous: those that also hold an ambiguous pronoun)
    """
    lexicon = lexicon or PronounLexicon.default()
    report = PronounReport()
    docs = {d.doc_key: d for d in gold_docs}
    for rec in records:
        doc = docs.get(rec.doc_key)
        if doc is None:
            raise KeyError(f"prediction for unknown document {rec.doc_key!r}")
        tokens = doc.tokens
        gold = _gold_cluster_ids(doc.clusters)

        def span_kind(span):
            if span[0] != span[1]:
                return None  # pronouns are single tokens
            return lexicon.kind(tokens[span[0]])

        for x, dec in enumerate(rec.antecedents_post):
            if dec < 0:
                continue
            ana, ant = rec.spans[x], rec.spans[dec]
            ka, kb = span_kind(ana), span_kind(ant)
            if ka in (None, "ambiguous") or kb in (None, "ambiguous"):
                continue
            if ka == "singular" and kb == "plural":
                report.sp += 1
            elif ka == "plural" and kb == "singular":
                report.ps += 1
            ana_cid = gold.get(ana)
            if ana_cid is None:
                report.fl += 1
            elif gold.get(ant) != ana_cid:
                report.wl += 1

        for cluster in rec.clusters:
            kinds = {span_kind(s) for s in cluster}
            if "singular" in kinds and "plural" in kinds:
                report.bc += 1
                if "ambiguous" in kinds:
                    report.bc_ambiguous += 1
    return report
