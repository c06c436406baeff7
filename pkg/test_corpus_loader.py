"""
Tests for corpus loading, merging, task units, label spaces and token statistics.
"""

import json

import pytest
from hypothesis import given, strategies as st

from models import NONE_LABEL, Corpus, CorpusFormatError, CorpusValidationError, Document, Paragraph
from services.corpus_loader import (
    _iter_records, build_label_space, load_corpus, merge_corpora, preprocess_corpus, task_units, token_stats,
)


def write_lines(path, records):
    path.write_text("\n".join(json.dumps(r) for r in records) + ("\n" if records else ""), encoding="utf-8")
    return path


def article(doc_id, text="some words here", language="en", **labels):
    return {"id": doc_id, "language": language, "text": text, **labels}


class TestLoadCorpus:
    def test_two_well_formed_lines(self, tmp_path):
        path = write_lines(tmp_path / "c.jsonl", [article("1", labels_t1="satire"), article("2")])
        corpus = load_corpus(path)
        assert len(corpus) == 2
        assert corpus.documents[0].labels_t1 == "satire"
        assert corpus.documents[1].labels_t1 is None

    def test_empty_file_gives_empty_corpus(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("", encoding="utf-8")
        assert len(load_corpus(path)) == 0

    def test_duplicate_id_names_its_line(self, tmp_path):
        path = write_lines(tmp_path / "c.jsonl",
                           [article("710376094"), article("2"), article("710376094")])
        with pytest.raises(CorpusValidationError, match="line 3") as excinfo:
            load_corpus(path)
        assert excinfo.value.line == 3

    def test_malformed_line_reports_line_number(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text(json.dumps(article("1")) + "\n{not json\n", encoding="utf-8")
        with pytest.raises(CorpusFormatError) as excinfo:
            load_corpus(path)
        assert excinfo.value.line == 2

    def test_unknown_task_key_rejected(self, tmp_path):
        path = write_lines(tmp_path / "c.jsonl", [article("1", labels_t4=["x"])])
        with pytest.raises(CorpusValidationError, match="labels_t4"):
            load_corpus(path)

    def test_raw_text_is_preserved_until_preprocessing(self, tmp_path):
        path = write_lines(tmp_path / "c.jsonl", [article("1", text="Hello, World! 123")])
        corpus = load_corpus(path)
        assert corpus.documents[0].text == "Hello, World! 123"
        cleaned = preprocess_corpus(corpus)
        assert cleaned.documents[0].text == "hello world"
        assert cleaned.documents[0].raw_text == "Hello, World! 123"

    def test_preprocessing_cleans_paragraphs_in_order(self):
        document = Document(id="1", language="en", text="", paragraphs=(
            Paragraph(0, "First, PARAGRAPH!", raw_text="First, PARAGRAPH!"), Paragraph(1, "See http://x.org 42")))
        cleaned = preprocess_corpus(Corpus((document,))).documents[0]
        assert [p.text for p in cleaned.paragraphs] == ["first paragraph", "see"]
        assert cleaned.paragraphs[0].raw_text == "First, PARAGRAPH!"

    def test_json_array_files_are_accepted(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps([article("1"), article("2")]), encoding="utf-8")
        assert [d.id for d in load_corpus(path)] == ["1", "2"]

    def test_json_array_errors_name_the_record(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text("\n\n" + json.dumps([article("1"), {"language": "en"}]), encoding="utf-8")
        with pytest.raises(CorpusValidationError, match="record 2") as excinfo:
            load_corpus(path)
        assert excinfo.value.kind == "record"

    def test_json_lines_are_read_lazily(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text(json.dumps(article("1")) + "\n\n{not json\n", encoding="utf-8")
        records = _iter_records(path)
        assert next(records) == ("line", 1, article("1"))
        with pytest.raises(CorpusFormatError) as excinfo:
            next(records)
        assert excinfo.value.line == 3

    def test_task_filter_drops_other_labels(self, tmp_path):
        path = write_lines(tmp_path / "c.jsonl", [article("1", labels_t1="satire", labels_t2=["Crime"])])
        document = load_corpus(path, task_filter={"T2"}).documents[0]
        assert document.labels_t1 is None
        assert document.labels_t2 == frozenset({"Crime"})

    def test_empty_paragraph_labels_become_none(self, tmp_path):
        record = article("1", paragraphs=[{"para_id": 0, "text": "a b", "labels_t3": []},
                                          {"para_id": 1, "text": "c", "labels_t3": ["Doubt"]}])
        document = load_corpus(write_lines(tmp_path / "c.jsonl", [record])).documents[0]
        assert document.paragraphs[0].labels_t3 == frozenset({NONE_LABEL})
        assert document.paragraphs[1].labels_t3 == frozenset({"Doubt"})


class TestMergeCorpora:
    def test_merge_keeps_order(self):
        a = Corpus((Document(id="1", language="en", text="x"),))
        b = Corpus((Document(id="2", language="fr", text="y"),))
        assert [d.id for d in merge_corpora([a, b])] == ["1", "2"]

    def test_duplicate_across_inputs_rejected(self):
        a = Corpus((Document(id="1", language="en", text="x"),))
        with pytest.raises(CorpusValidationError, match="'1'"):
            merge_corpora([a, a])


class TestTaskUnitsAndLabelSpaces:
    def corpus(self):
        return Corpus((
            Document(id="a", language="en", text="one two three", labels_t1="opinion",
                     labels_t2=frozenset({"Crime", "Politics"}),
                     paragraphs=(Paragraph(0, "one two three", frozenset({"Doubt"})),
                                 Paragraph(1, "four five six seven eight", frozenset({NONE_LABEL})))),
            Document(id="b", language="fr", text="un deux", labels_t1="satire", labels_t2=frozenset({"Crime"})),
            Document(id="c", language="de", text="eins"),
        ))

    def test_units_skip_unlabelled_articles(self):
        assert [u.unit_id for u in task_units(self.corpus(), "T1")] == ["a", "b"]
        assert [u.unit_id for u in task_units(self.corpus(), "T3")] == ["a:0", "a:1"]

    def test_unlabelled_listing_hides_labels(self):
        units = task_units(self.corpus(), "T1", labeled_only=False)
        assert [u.unit_id for u in units] == ["a", "b", "c"]
        assert all(u.labels == frozenset() for u in units)

    def test_t3_label_space_ends_with_none(self):
        space = build_label_space(self.corpus(), "T3")
        assert space.labels == ("Doubt", NONE_LABEL)
        assert space.counts == (1, 1)

    def test_t2_counts_are_per_unit(self):
        space = build_label_space(self.corpus(), "T2")
        assert dict(zip(space.labels, space.counts)) == {"Crime": 2, "Politics": 1}

    def test_configured_labels_must_cover_observed(self):
        with pytest.raises(CorpusValidationError, match="satire"):
            build_label_space(self.corpus(), "T1", labels=["opinion"])

    def test_configured_labels_keep_their_order(self):
        space = build_label_space(self.corpus(), "T1", labels=["satire", "reporting", "opinion"])
        assert space.labels == ("satire", "reporting", "opinion")
        assert space.counts == (1, 0, 1)


class TestTokenStats:
    def test_single_document(self):
        corpus = Corpus((Document(id="1", language="en", text="a b c", labels_t1="x"),))
        stats = token_stats(corpus, "T1")
        assert (stats.min_tokens, stats.max_tokens, stats.avg_tokens) == (3, 3, 3.0)

    def test_paragraphs_of_three_and_five_tokens(self):
        corpus = Corpus((Document(id="1", language="en", text="",
                                  paragraphs=(Paragraph(0, "a b c"), Paragraph(1, "a b c d e"))),))
        stats = token_stats(corpus, "T3")
        assert (stats.min_tokens, stats.max_tokens, stats.avg_tokens) == (3, 5, 4.0)

    def test_empty_unit_set_rejected(self):
        with pytest.raises(CorpusValidationError):
            token_stats(Corpus(), "T1")

    @given(st.lists(st.integers(min_value=0, max_value=50), min_size=1, max_size=30))
    def test_min_avg_max_ordering(self, lengths):
        """
        Property: Token Statistics Ordering
        min <= avg <= max on every non-empty corpus
        """
        documents = tuple(Document(id=str(i), language="en", text=" ".join(["w"] * n), labels_t1="x")
                          for i, n in enumerate(lengths))
        stats = token_stats(Corpus(documents), "T1")
        assert stats.min_tokens <= stats.avg_tokens <= stats.max_tokens
        assert stats.n_units == len(lengths)
