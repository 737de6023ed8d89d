"""Command-line entry point: preprocess / train / predict / evaluate /
analyze subcommands over a shared flat config.

Precedence: built-in defaults < --config file keys < explicit flags.
Structured JSON logs go to stderr; every subcommand writes a run manifest
(resolved config, seed, input digests, timestamps) next to its primary
output.  Exit codes: 0 ok, 1 data/model error, 2 usage error.
"""

from __future__ import annotations

import argparse
import dataclasses
import glob
import hashlib
import json
import os
import sys
import time

from . import __version__
from .analysis import AlignmentError, PronounLexicon, link_change, pronoun_analysis
from .autodiff import NumericError
from .config import Config
from .corpus import ParseError, parse_conll, read_jsonlines, segment_document, write_jsonlines
from .embedding import EmbeddingLookupError, make_provider
from .metrics import evaluate_corpus, write_report
from .model import CorefModel, predict_corpus
from .optim import load_checkpoint, save_checkpoint
from .ranker import read_predictions, write_predictions
from .trainer import repeat_runs, train

_DATA_ERRORS = (
    ParseError,
    AlignmentError,
    NumericError,
    EmbeddingLookupError,
    FileNotFoundError,
    KeyError,
    ValueError,
)


def log_event(event, **fields):
    print(json.dumps({"event": event, **fields}, sort_keys=True), file=sys.stderr)


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_path, command, config, inputs, outputs, started):
    manifest = {
        "command": command,
        "build": f"corefkit-{__version__}",
        "config": config.to_dict(),
        "seed": config.seed,
        "inputs": {p: _sha256(p) for p in inputs if os.path.exists(p)},
        "outputs": sorted(outputs),
        "started_at": started,
        "finished_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    path = f"{out_path}.manifest.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def resolve_config(args):
    """defaults < config file < explicit CLI flags."""
    data = Config().to_dict()
    if args.config:
        file_cfg = Config.load(args.config)
        data.update(file_cfg.to_dict())
    flag_map = {
        "seed": "seed",
        "max_seg_len": "max_seg_len",
        "hoi": "hoi_method",
        "epochs": "epochs",
        "embed_provider": "embed_provider",
        "embeddings": "embeddings_path",
        "embed_dim": "embed_dim",
        "embed_seed": "embed_seed",
    }
    for flag, key in flag_map.items():
        value = getattr(args, flag, None)
        if value is not None:
            data[key] = value
    return Config.from_dict(data)


def _provider(config):
    return make_provider(
        config.embed_provider,
        path=config.embeddings_path or None,
        dim=config.embed_dim,
        seed=config.embed_seed,
    )


def _load_model(path, hoi_override=None):
    params, _, seed, meta = load_checkpoint(path)
    if "config" not in meta:
        raise ValueError(f"checkpoint {path} carries no config")
    config = Config.from_dict(meta["config"])
    if hoi_override is not None:
        config = config.replace(hoi_method=hoi_override)
    model = CorefModel(config, seed=seed)
    model.bag.load_state_dict(params)
    return model


# -- subcommands -------------------------------------------------------------


def cmd_preprocess(args):
    started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    config = resolve_config(args)
    if os.path.isdir(args.input):
        paths = sorted(
            p
            for p in glob.glob(os.path.join(args.input, "**", "*"), recursive=True)
            if p.endswith(("_conll", ".conll"))
        )
        if not paths:
            raise FileNotFoundError(f"no *_conll files under {args.input}")
    else:
        paths = [args.input]
    docs = []
    for path in paths:
        with open(path, encoding="utf-8") as fh:
            docs.extend(parse_conll(fh.read()))
    n_segments = 0
    for doc in docs:
        n_segments += len(segment_document(doc, config.max_seg_len))
    write_jsonlines(args.output, docs)
    log_event(
        "preprocess",
        documents=len(docs),
        segments=n_segments,
        max_seg_len=config.max_seg_len,
        output=args.output,
    )
    write_manifest(args.output, "preprocess", config, paths, [args.output], started)
    return 0


def cmd_train(args):
    started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    config = resolve_config(args)
    train_docs = read_jsonlines(args.train)
    dev_docs = read_jsonlines(args.dev) if args.dev else []
    provider = _provider(config)
    if args.repeats > 1:
        stats = repeat_runs(train_docs, dev_docs, config, provider, k=args.repeats,
                            log=lambda e: log_event("epoch", **e))
        log_event("repeat_runs", runs=stats.scores, mean=stats.mean, stdev=stats.stdev)
    result = train(
        train_docs, dev_docs, config, provider, log=lambda e: log_event("epoch", **e)
    )
    save_checkpoint(
        args.out,
        result.model.bag,
        optimizer=result.optimizer,
        seed=config.seed,
        meta={"config": config.to_dict()},
    )
    log_event(
        "train_done",
        best_dev_avg_f1=result.best_dev_f1,
        best_epoch=result.best_epoch,
        checkpoint=args.out,
    )
    inputs = [args.train] + ([args.dev] if args.dev else [])
    write_manifest(args.out, "train", config, inputs, [args.out], started)
    return 0


def cmd_predict(args):
    started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    model = _load_model(args.model, hoi_override=args.hoi)
    config = model.config
    docs = read_jsonlines(args.input)
    provider = _provider(config)
    records = predict_corpus(model, docs, provider, jobs=args.jobs)
    write_predictions(args.output, records)
    log_event("predict", documents=len(docs), hoi=config.hoi_method, output=args.output)
    write_manifest(args.output, "predict", config, [args.model, args.input], [args.output], started)
    return 0


def _clusters_from_pred_file(path):
    with open(path, encoding="utf-8") as fh:
        first = ""
        for line in fh:
            if line.strip():
                first = line
                break
    if first and "antecedents_post" in json.loads(first):
        return {r.doc_key: r.clusters for r in read_predictions(path)}
    return {d.doc_key: d.clusters for d in read_jsonlines(path)}


def cmd_evaluate(args):
    started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    config = resolve_config(args)
    gold = {d.doc_key: d.clusters for d in read_jsonlines(args.gold)}
    pred = _clusters_from_pred_file(args.pred)
    report = evaluate_corpus(gold, pred)
    write_report(args.report, report)
    log_event("evaluate", avg_f1=report.avg_f1, report=args.report)
    write_manifest(args.report, "evaluate", config, [args.gold, args.pred], [args.report], started)
    return 0


def cmd_analyze(args):
    started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    config = resolve_config(args)
    gold_docs = read_jsonlines(args.gold)
    gold = {d.doc_key: d.clusters for d in gold_docs}
    before_recs = read_predictions(args.before)
    after_recs = read_predictions(args.after)

    def decision_map(records, which):
        col = "antecedents_pre" if which == "pre" else "antecedents_post"
        return {r.doc_key: (r.spans, getattr(r, col)) for r in records}

    lc = link_change(
        decision_map(before_recs, args.before_pass),
        decision_map(after_recs, args.after_pass),
        gold,
        include_nongold=config.include_nongold,
    )
    lexicon = PronounLexicon.load(args.lexicon) if args.lexicon else PronounLexicon.default()
    pr = pronoun_analysis(after_recs, gold_docs, lexicon)
    out = {"link_change": lc.to_json(), "pronouns": pr.to_json()}
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(out, fh, indent=2, sort_keys=True)
        fh.write("\n")
    log_event("analyze", **out["link_change"])
    write_manifest(
        args.out, "analyze", config, [args.gold, args.before, args.after], [args.out], started
    )
    return 0


# -- parser ------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="corefkit", description=__doc__)
    parser.add_argument("--config", help="flat JSON config file")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--jobs", type=int, default=1, help="document-level parallelism")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="CoNLL directory/file -> jsonlines corpus")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--max-seg-len", dest="max_seg_len", type=int, default=None)
    p.set_defaults(fn=cmd_preprocess)

    p = sub.add_parser("train", help="train a model on a jsonlines corpus")
    p.add_argument("--train", required=True)
    p.add_argument("--dev", default=None)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--hoi", choices=["none", "aa", "ee", "sc", "cm"], default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--repeats", type=int, default=1, help="repeat training with shifted seeds")
    _add_embed_flags(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("predict", help="decode clusters with a trained checkpoint")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True, help="prediction dump (jsonlines)")
    p.add_argument("--hoi", choices=["none", "aa", "ee", "sc", "cm"], default=None)
    p.set_defaults(fn=cmd_predict)

    p = sub.add_parser("evaluate", help="score predictions against gold clusters")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--report", required=True, help="metric report JSON path")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("analyze", help="link-change and pronoun analyses over dumps")
    p.add_argument("--before", required=True)
    p.add_argument("--after", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--before-pass", choices=["pre", "post"], default="pre")
    p.add_argument("--after-pass", choices=["pre", "post"], default="post")
    p.add_argument("--lexicon", default=None, help="pronoun lexicon JSON path")
    p.set_defaults(fn=cmd_analyze)
    return parser


def _add_embed_flags(p):
    p.add_argument("--embed-provider", dest="embed_provider", choices=["file", "hash"], default=None)
    p.add_argument("--embeddings", default=None, help="embedding container path")
    p.add_argument("--embed-dim", dest="embed_dim", type=int, default=None)
    p.add_argument("--embed-seed", dest="embed_seed", type=int, default=None)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except _DATA_ERRORS as exc:
        log_event("error", type=type(exc).__name__, message=str(exc))
        return 1


if __name__ == "__main__":
    sys.exit(main())
