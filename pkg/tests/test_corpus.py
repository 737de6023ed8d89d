"""CoNLL parsing, the jsonlines working format, and segmentation."""

import warnings

import pytest

from corefkit.corpus import (
    Document,
    ParseError,
    from_jsonlines,
    genre_of,
    load_toy_corpus,
    parse_conll,
    emit_conll,
    segment_document,
    to_jsonlines,
    token_segment_ids,
)
from oracles import random_document

COLS = "docid 0 {i} {tok} - - - - - {spk} - {coref}"


def conll_doc(rows, name="tc/unit/doc", part=0):
    lines = [f"#begin document ({name}); part {part:03d}"]
    for i, (tok, coref) in enumerate(rows):
        lines.append(COLS.format(i=i, tok=tok, spk="spk", coref=coref))
    lines += ["", "#end document"]
    return "\n".join(lines)


class TestParse:
    def test_single_bracket_pair(self):
        text = conll_doc([("a", "-"), ("b", "-"), ("c", "(0"), ("d", "-"), ("e", "0)")])
        (doc,) = parse_conll(text)
        assert doc.clusters == [[(2, 4)]]
        assert doc.doc_key == "tc/unit/doc_0"

    def test_unit_width_mention(self):
        text = conll_doc([("a", "-"), ("b", "-"), ("c", "-"), ("d", "(0)")])
        (doc,) = parse_conll(text)
        assert doc.clusters == [[(3, 3)]]

    def test_nested_same_cluster(self):
        # "(0" token 0, "(0)|0)" token 1: He .. himself plus the pair span
        text = conll_doc([("He", "(0"), ("himself", "(0)|0)")])
        (doc,) = parse_conll(text)
        assert doc.clusters == [[(0, 1), (1, 1)]]

    def test_open_plus_close_on_same_token(self):
        # close the outer span and open a new one on the same token
        text = conll_doc([("a", "(0"), ("b", "(0|0)"), ("c", "0)")])
        (doc,) = parse_conll(text)
        assert doc.clusters == [[(0, 1), (1, 2)]]

    def test_crossing_clusters_with_distinct_ids(self):
        text = conll_doc([("a", "(0"), ("b", "(1"), ("c", "0)"), ("d", "1)")])
        (doc,) = parse_conll(text)
        assert doc.clusters == [[(0, 2)], [(1, 3)]]

    def test_unbalanced_bracket_names_doc_and_line(self):
        text = conll_doc([("a", "(0"), ("b", "-")])
        with pytest.raises(ParseError, match="tc/unit/doc_0.*cluster"):
            parse_conll(text)

    def test_close_without_open(self):
        text = conll_doc([("a", "0)")])
        with pytest.raises(ParseError, match="without opener"):
            parse_conll(text)

    def test_missing_columns_is_format_error(self):
        text = "#begin document (x/y/z); part 000\na b c\n\n#end document"
        with pytest.raises(ParseError, match="columns"):
            parse_conll(text)

    def test_missing_end_document(self):
        text = "#begin document (x/y/z); part 000\n" + COLS.format(i=0, tok="a", spk="s", coref="-")
        with pytest.raises(ParseError, match="missing #end"):
            parse_conll(text)

    def test_speakers_and_sentences(self):
        text = conll_doc([("a", "-"), ("b", "-")])
        (doc,) = parse_conll(text)
        assert doc.speakers == ["spk", "spk"]
        assert doc.sentences == [["a", "b"]]

    def test_round_trip_random_documents(self, rng):
        # the acceptance suite runs 500; keep the unit test snappy
        for i in range(120):
            doc = random_document(rng, doc_id=i)
            (back,) = parse_conll(emit_conll([doc]))
            assert back.clusters == doc.clusters, f"doc {i}"
            assert back.sentences == doc.sentences
            assert back.speakers == doc.speakers
            assert back.doc_key == doc.doc_key

    def test_mention_count_preserved_by_conversions(self, rng):
        for i in range(40):
            doc = random_document(rng, doc_id=i)
            n_mentions = sum(len(c) for c in doc.clusters)
            (via_conll,) = parse_conll(emit_conll([doc]))
            (via_json,) = from_jsonlines(to_jsonlines([doc]))
            assert sum(len(c) for c in via_conll.clusters) == n_mentions
            assert sum(len(c) for c in via_json.clusters) == n_mentions


class TestDocumentInvariants:
    def test_mention_out_of_range(self):
        with pytest.raises(ValueError, match="out of range"):
            Document("tc/x_0", [["a", "b"]], ["s", "s"], clusters=[[(0, 2)]])

    def test_mention_in_two_clusters(self):
        with pytest.raises(ValueError, match="two clusters"):
            Document("tc/x_0", [["a", "b"]], ["s", "s"], clusters=[[(0, 0)], [(0, 0), (1, 1)]])

    def test_speaker_length_mismatch(self):
        with pytest.raises(ValueError, match="speakers"):
            Document("tc/x_0", [["a", "b"]], ["s"], clusters=[])

    def test_genre_from_doc_key(self):
        assert genre_of("bc/cctv/00/cctv_0000_0") == "bc"
        assert genre_of("x") == "xx"
        assert Document("nw/a_0", [["t"]], ["s"]).genre == "nw"


class TestJsonlines:
    def test_empty_list(self):
        assert to_jsonlines([]) == ""
        assert from_jsonlines("") == []

    def test_round_trip_identity(self, rng):
        docs = [random_document(rng, doc_id=i) for i in range(20)]
        back = from_jsonlines(to_jsonlines(docs))
        assert back == docs

    def test_byte_stable_under_canonical_ordering(self, rng):
        docs = [random_document(rng, doc_id=i) for i in range(100)]
        text1 = to_jsonlines(docs)
        text2 = to_jsonlines(from_jsonlines(text1))
        assert text1 == text2

    def test_bad_record_raises(self):
        with pytest.raises(ParseError, match="line 1"):
            from_jsonlines("{nope}\n")


class TestSegmentation:
    def doc(self, sent_lens):
        sentences = [[f"t{i}_{j}" for j in range(n)] for i, n in enumerate(sent_lens)]
        total = sum(sent_lens)
        return Document("nw/seg_0", sentences, ["-"] * total)

    def test_single_short_document(self):
        segs = segment_document(self.doc([10]), 100)
        assert [s.token_range for s in segs] == [(0, 10)]

    def test_greedy_packing(self):
        segs = segment_document(self.doc([5, 5, 5]), 10)
        assert [s.token_range for s in segs] == [(0, 10), (10, 15)]

    def test_overflow_sentence_warns(self):
        with pytest.warns(UserWarning, match="overflow"):
            segs = segment_document(self.doc([3, 12, 2]), 10)
        assert [s.token_range for s in segs] == [(0, 3), (3, 15), (15, 17)]

    def test_invalid_max_len(self):
        with pytest.raises(ValueError):
            segment_document(self.doc([3]), 0)

    def test_tiling_property(self, rng):
        for i in range(40):
            doc = random_document(rng, doc_id=i, max_sentences=8, max_sent_len=12)
            if doc.n_tokens == 0:
                continue
            max_len = int(rng.integers(1, 15))
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                segs = segment_document(doc, max_len)
                ids = token_segment_ids(doc, max_len)
            ranges = [s.token_range for s in segs]
            assert ranges[0][0] == 0 and ranges[-1][1] == doc.n_tokens
            for (a, b), (c, d) in zip(ranges, ranges[1:]):
                assert b == c and a < b
            assert len(ids) == doc.n_tokens
            assert ids == sorted(ids)


class TestToyCorpus:
    def test_loads_five_documents(self):
        docs = load_toy_corpus()
        assert len(docs) == 5
        assert {d.genre for d in docs} == {"tc", "nw"}
        assert all(d.clusters for d in docs)
