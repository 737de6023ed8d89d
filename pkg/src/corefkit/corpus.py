"""CoNLL-2012 document parsing, the jsonlines working format, and
segmentation of long documents into independent windows.

Column layout handled here (whitespace-aligned *_conll files): column 3 is
the token, column 9 the speaker, the last column the coreference layer
with "(id" / "id)" / "(id)" brackets.  Parse trees, NER and SRL columns
are skipped.
"""

from __future__ import annotations

import json
import re
import warnings
from dataclasses import dataclass, field

_BEGIN_RE = re.compile(r"#begin document \((?P<name>.*)\); part (?P<part>\d+)")
_MIN_COLUMNS = 12

KNOWN_GENRES = ("bc", "bn", "mz", "nw", "pt", "tc", "wb", "xx")


class ParseError(ValueError):
    """Malformed CoNLL input; message carries doc_key and line number."""


def genre_of(doc_key):
    """First two characters of the doc_key (CoNLL convention), else 'xx'."""
    if doc_key and len(doc_key) >= 2:
        return doc_key[:2]
    return "xx"


@dataclass
class Document:
    doc_key: str
    sentences: list  # list[list[str]]
    speakers: list  # one string per token, flattened
    genre: str = ""
    clusters: list = field(default_factory=list)  # list[list[(start, end)]], inclusive token indices

    def __post_init__(self):
        if not self.genre:
            self.genre = genre_of(self.doc_key)
        n = self.n_tokens
        if len(self.speakers) != n:
            raise ValueError(f"{self.doc_key}: {len(self.speakers)} speakers for {n} tokens")
        seen = {}
        for ci, cluster in enumerate(self.clusters):
            for (s, e) in cluster:
                if not (0 <= s <= e < n):
                    raise ValueError(f"{self.doc_key}: mention ({s},{e}) out of range for {n} tokens")
                if (s, e) in seen and seen[(s, e)] != ci:
                    raise ValueError(f"{self.doc_key}: mention ({s},{e}) in two clusters")
                seen[(s, e)] = ci
        self.clusters = canonical_clusters(self.clusters)

    @property
    def n_tokens(self):
        return sum(len(s) for s in self.sentences)

    @property
    def tokens(self):
        return [t for sent in self.sentences for t in sent]

    def sentence_bounds(self):
        """Per-sentence (start, end_exclusive) token offsets."""
        bounds, off = [], 0
        for sent in self.sentences:
            bounds.append((off, off + len(sent)))
            off += len(sent)
        return bounds


@dataclass(frozen=True)
class Segment:
    doc_key: str
    token_range: tuple  # (begin, end_exclusive)
    max_len: int


def canonical_clusters(clusters):
    """Sort mentions within clusters and clusters by first mention."""
    canon = [sorted((int(s), int(e)) for (s, e) in c) for c in clusters]
    canon.sort(key=lambda c: (c[0], len(c)) if c else ((0, 0), 0))
    return [[(s, e) for (s, e) in c] for c in canon]


def parse_conll(text):
    """Parse CoNLL-2012 column text into Documents.

    Coreference brackets are matched with one LIFO stack per cluster id,
    so nested mentions of the same cluster round-trip correctly.
    """
    docs = []
    doc_key = None
    sentences, speakers, sent_tokens = [], [], []
    open_spans = {}  # cluster id -> stack of open start offsets
    mentions = {}  # cluster id -> set of (start, end)
    token_count = 0

    def finish_document(line_no):
        nonlocal doc_key, sentences, speakers, sent_tokens, open_spans, mentions, token_count
        if sent_tokens:
            sentences.append(sent_tokens)
            sent_tokens = []
        dangling = {cid: stack for cid, stack in open_spans.items() if stack}
        if dangling:
            raise ParseError(
                f"{doc_key}: unbalanced coreference bracket for cluster(s) "
                f"{sorted(dangling)} at line {line_no}"
            )
        clusters = [sorted(mentions[cid]) for cid in sorted(mentions)]
        docs.append(Document(doc_key, sentences, speakers, clusters=clusters))
        doc_key = None
        sentences, speakers = [], []
        open_spans, mentions = {}, {}
        token_count = 0

    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if stripped.startswith("#begin document"):
            m = _BEGIN_RE.match(stripped)
            if not m:
                raise ParseError(f"malformed begin line {line_no}: {stripped!r}")
            doc_key = f"{m.group('name')}_{int(m.group('part'))}"
            continue
        if stripped == "#end document":
            if doc_key is None:
                raise ParseError(f"#end document without open document at line {line_no}")
            finish_document(line_no)
            continue
        if doc_key is None:
            if stripped:
                raise ParseError(f"token line outside any document at line {line_no}")
            continue
        if not stripped:
            if sent_tokens:
                sentences.append(sent_tokens)
                sent_tokens = []
            continue
        cols = stripped.split()
        if len(cols) < _MIN_COLUMNS:
            raise ParseError(
                f"{doc_key}: expected >= {_MIN_COLUMNS} columns, got {len(cols)} at line {line_no}"
            )
        token, speaker, coref = cols[3], cols[9], cols[-1]
        sent_tokens.append(token)
        speakers.append(speaker if speaker else "-")
        if coref != "-":
            # Sort items so "(id" entries are seen before "id)" on the
            # same token (e.g. "(30)|30)" closes the outer span last).
            for item in sorted(coref.split("|"), reverse=True):
                if not re.fullmatch(r"\(?\d+\)?", item):
                    raise ParseError(f"{doc_key}: bad coreference item {item!r} at line {line_no}")
                cid = int(item.strip("()"))
                if item.startswith("("):
                    open_spans.setdefault(cid, []).append(token_count)
                if item.endswith(")"):
                    stack = open_spans.get(cid)
                    if not stack:
                        raise ParseError(
                            f"{doc_key}: closing bracket for cluster {cid} without opener "
                            f"at line {line_no}"
                        )
                    start = stack.pop()
                    mentions.setdefault(cid, set()).add((start, token_count))
        token_count += 1

    if doc_key is not None:
        raise ParseError(f"{doc_key}: missing #end document")
    return docs


def emit_conll(docs):
    """Render Documents back to CoNLL-2012 column text (12 columns,
    placeholder '-' for layers this engine does not model)."""
    out = []
    for doc in docs:
        name, _, part = doc.doc_key.rpartition("_")
        if not name or not part.isdigit():
            name, part = doc.doc_key, "0"
        out.append(f"#begin document ({name}); part {int(part):03d}")
        opens = {}
        closes = {}
        singles = {}
        for cid, cluster in enumerate(doc.clusters):
            for (s, e) in cluster:
                if s == e:
                    singles.setdefault(s, []).append(cid)
                else:
                    opens.setdefault(s, []).append((e, cid))
                    closes.setdefault(e, []).append((s, cid))
        offset = 0
        for sent in doc.sentences:
            for wi, token in enumerate(sent):
                items = []
                # Wider spans open first so nesting reads naturally.
                for (e, cid) in sorted(opens.get(offset, []), key=lambda x: -x[0]):
                    items.append(f"({cid}")
                for cid in singles.get(offset, []):
                    items.append(f"({cid})")
                for (s, cid) in sorted(closes.get(offset, []), key=lambda x: -x[0]):
                    items.append(f"{cid})")
                coref = "|".join(items) if items else "-"
                speaker = doc.speakers[offset]
                cols = [name, part, str(wi), token, "-", "-", "-", "-", "-", speaker, "-", coref]
                out.append(" ".join(cols))
                offset += 1
            out.append("")
        out.append("#end document")
    return "\n".join(out) + ("\n" if out else "")


def doc_to_json(doc):
    return {
        "doc_key": doc.doc_key,
        "sentences": doc.sentences,
        "speakers": doc.speakers,
        "genre": doc.genre,
        "clusters": [[[s, e] for (s, e) in c] for c in doc.clusters],
    }


def doc_from_json(obj):
    return Document(
        doc_key=obj["doc_key"],
        sentences=[list(s) for s in obj["sentences"]],
        speakers=list(obj["speakers"]),
        genre=obj.get("genre", ""),
        clusters=[[(int(s), int(e)) for (s, e) in c] for c in obj["clusters"]],
    )


def to_jsonlines(docs):
    """One canonical-key JSON object per line; byte-stable round trip."""
    return "".join(json.dumps(doc_to_json(d), sort_keys=True, ensure_ascii=False) + "\n" for d in docs)


def from_jsonlines(text):
    docs = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            docs.append(doc_from_json(json.loads(line)))
        except (json.JSONDecodeError, KeyError) as exc:
            raise ParseError(f"bad jsonlines record at line {line_no}: {exc}") from exc
    return docs


def read_jsonlines(path):
    with open(path, encoding="utf-8") as fh:
        return from_jsonlines(fh.read())


def write_jsonlines(path, docs):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(to_jsonlines(docs))


def load_toy_corpus():
    """The bundled 5-document synthetic corpus (demo and test data)."""
    from importlib import resources

    text = resources.files("corefkit").joinpath("data/toy.conll").read_text(encoding="utf-8")
    return parse_conll(text)


def segment_document(doc, max_len):
    """Greedily pack whole sentences into segments of at most max_len tokens.

    A sentence longer than max_len becomes its own overflow segment (with a
    warning) rather than being split, keeping sentences intact.
    """
    if max_len <= 0:
        raise ValueError(f"max_len must be positive, got {max_len}")
    segments = []
    begin = None
    length = 0
    for (s, e) in doc.sentence_bounds():
        sent_len = e - s
        if sent_len > max_len:
            if begin is not None:
                segments.append(Segment(doc.doc_key, (begin, s), max_len))
                begin, length = None, 0
            warnings.warn(
                f"{doc.doc_key}: sentence of {sent_len} tokens exceeds max_len={max_len}; "
                "emitting an overflow segment"
            )
            segments.append(Segment(doc.doc_key, (s, e), max_len))
            continue
        if begin is None:
            begin, length = s, sent_len
        elif length + sent_len <= max_len:
            length += sent_len
        else:
            segments.append(Segment(doc.doc_key, (begin, s), max_len))
            begin, length = s, sent_len
    if begin is not None:
        segments.append(Segment(doc.doc_key, (begin, begin + length), max_len))
    return segments


def token_segment_ids(doc, max_len):
    """Per-token segment index under segment_document(doc, max_len)."""
    ids = [0] * doc.n_tokens
    for si, seg in enumerate(segment_document(doc, max_len)):
        b, e = seg.token_range
        for t in range(b, e):
            ids[t] = si
    return ids
