"""Desk-scale training: marginal log-likelihood over gold antecedent sets,
one document per optimizer step, per-epoch dev evaluation with best-dev
checkpointing, and repeated-run statistics."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import NumericError
from .metrics import evaluate_corpus
from .model import CorefModel
from .optim import Adam, AdamGroup, clip_global_norm


def gold_antecedent_mask(frame, gold_clusters):
    """[k, C+1] mask of gold-coreferent candidates per span.

    A candidate is gold for span x when both spans sit in the same gold
    cluster; spans with no surviving gold candidate fall back to the
    dummy column (discourse-new).
    """
    k, c = frame.cand_idx.shape
    cid = {}
    for ci, cluster in enumerate(gold_clusters):
        for m in cluster:
            cid[tuple(m)] = ci
    span_cid = np.asarray([cid.get(tuple(s), -1) for s in frame.spans], dtype=np.int64)
    mask = np.zeros((k, c + 1), dtype=bool)
    if k:
        safe = np.maximum(frame.cand_idx, 0)
        same = (
            (span_cid[:, None] >= 0)
            & (span_cid[:, None] == span_cid[safe])
            & frame.cand_mask
        )
        mask[:, :c] = same
        mask[~same.any(axis=1), c] = True
    return mask


def marginal_loss(frame, gold_clusters):
    """-sum_x log sum_{y in GOLD(x)} P(y), over the frame's score rows."""
    if frame.k == 0:
        return ad.Tensor(np.zeros(()))
    gold = gold_antecedent_mask(frame, gold_clusters)
    lse_all = ad.masked_logsumexp(frame.scores, frame.full_mask)
    lse_gold = ad.masked_logsumexp(frame.scores, gold)
    return ad.sum_all(lse_all - lse_gold)


@dataclass
class RunStats:
    scores: list  # per-run dev Avg-F1

    @property
    def mean(self):
        return float(np.mean(self.scores)) if self.scores else 0.0

    @property
    def stdev(self):
        # Population formula: a single run must report exactly 0.
        return float(np.std(self.scores, ddof=0)) if self.scores else 0.0


@dataclass
class TrainResult:
    model: CorefModel
    history: list = field(default_factory=list)  # per-epoch dicts
    best_dev_f1: float = 0.0
    best_epoch: int = 0
    stopped_early: bool = False
    optimizer: object = None


class _EmbeddingCache:
    def __init__(self, provider):
        self.provider = provider
        self._cache = {}

    def get(self, doc):
        if doc.doc_key not in self._cache:
            self._cache[doc.doc_key] = self.provider.get(doc)
        return self._cache[doc.doc_key]


def evaluate_model(model, docs, provider, hoi_method=None):
    gold = {d.doc_key: d.clusters for d in docs}
    pred = {}
    for doc in docs:
        out = model.forward(doc, provider.get(doc), train=False, hoi_method=hoi_method)
        pred[doc.doc_key] = out.clusters
    return evaluate_corpus(gold, pred)


def train(train_docs, dev_docs, config, provider, log=None, stop_at_train_f1=None):
    """Train a fresh model; returns the best-dev parameters loaded back in.

    One document per step; gradients are clipped at the configured global
    norm; the LR decays linearly to zero across all planned steps.  Every
    epoch evaluates the dev split (falling back to the train split when no
    dev documents are given) and the best-scoring parameters win.
    """
    model = CorefModel(config)
    bag = model.bag
    groups = [AdamGroup(bag.names(), config.lr_task, config.weight_decay_task)]
    # The encoder group (lr_encoder / weight_decay_encoder) owns no tensors
    # here: token vectors arrive frozen from the provider.
    optimizer = Adam(
        bag,
        groups,
        beta1=config.adam_beta1,
        beta2=config.adam_beta2,
        eps=config.adam_eps,
        total_steps=max(config.epochs * len(train_docs), 1),
    )
    cache = _EmbeddingCache(provider)
    shuffle_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1]))
    params = [bag[n] for n in bag.names()]
    eval_docs = dev_docs if dev_docs else train_docs
    result = TrainResult(model=model)
    best_state = bag.state_dict()

    for epoch in range(1, config.epochs + 1):
        t0 = time.time()
        epoch_loss = 0.0
        for di in shuffle_rng.permutation(len(train_docs)):
            doc = train_docs[di]
            try:
                bag.zero_grad()
                out = model.forward(doc, cache.get(doc), train=True)
                loss = marginal_loss(out.frame, doc.clusters)
                loss.backward()
                clip_global_norm(params, config.grad_clip_norm)
                optimizer.step()
            except NumericError as exc:
                raise NumericError(f"{doc.doc_key}: {exc}") from exc
            epoch_loss += float(loss.data)
        report = evaluate_model(model, eval_docs, cache)
        entry = {
            "epoch": epoch,
            "loss": epoch_loss,
            "dev_avg_f1": report.avg_f1,
            "seconds": time.time() - t0,
        }
        result.history.append(entry)
        if log is not None:
            log(entry)
        if report.avg_f1 > result.best_dev_f1 or result.best_epoch == 0:
            result.best_dev_f1 = report.avg_f1
            result.best_epoch = epoch
            best_state = bag.state_dict()
        if stop_at_train_f1 is not None:
            train_f1 = (
                report.avg_f1
                if eval_docs is train_docs
                else evaluate_model(model, train_docs, cache).avg_f1
            )
            entry["train_avg_f1"] = train_f1
            if train_f1 >= stop_at_train_f1:
                result.stopped_early = True
                break

    bag.load_state_dict(best_state)
    result.optimizer = optimizer
    return result


def repeat_runs(train_docs, dev_docs, config, provider, k=5, log=None):
    """Train k times with consecutive seeds; returns dev Avg-F1 statistics."""
    scores = []
    for i in range(k):
        run_cfg = config.replace(seed=config.seed + i)
        result = train(train_docs, dev_docs, run_cfg, provider, log=log)
        scores.append(result.best_dev_f1)
    return RunStats(scores)
