
import pytest

from selfcot.corpus import (
    AnswerKind,
    CorpusError,
    Dataset,
    GoldReadError,
    NLI_LABELS,
    Question,
    TaskSchema,
    forbid_gold_reads,
    gold_read_count,
    load_dataset,
    sample_subset,
)

from conftest import write_jsonl


class TestTaskSchema:
    def test_numeric_has_no_labels(self):
        assert TaskSchema.numeric().label_set == ()
        with pytest.raises(ValueError):
            TaskSchema(AnswerKind.NUMERIC, ("1",))

    def test_multiple_choice_labels_are_contiguous_from_a(self):
        assert TaskSchema.multiple_choice(4).label_set == ("a", "b", "c", "d")
        with pytest.raises(ValueError):
            TaskSchema(AnswerKind.MULTIPLE_CHOICE, ("b", "c"))
        with pytest.raises(ValueError):
            TaskSchema(AnswerKind.MULTIPLE_CHOICE, ())

    def test_nli_labels_fixed(self):
        assert TaskSchema.nli().label_set == NLI_LABELS
        with pytest.raises(ValueError):
            TaskSchema(AnswerKind.NLI_LABEL, ("yes", "no"))

    def test_yes_no_labels(self):
        assert TaskSchema.yes_no().label_set == ("yes", "no")


class TestLoadDataset:
    def test_math_record_with_gold(self, tmp_path):
        # a plain id/question/answer record canonicalizes its gold answer
        path = write_jsonl(
            tmp_path / "math.jsonl",
            [{"id": "q1", "question": "Stefan goes to a restaurant...", "answer": "108"}],
        )
        ds = load_dataset(path, TaskSchema.numeric())
        assert len(ds) == 1
        q = ds.questions[0]
        assert q.id == "q1"
        assert q.schema.kind is AnswerKind.NUMERIC
        assert q.gold == "108"

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        ds = load_dataset(path, TaskSchema.numeric())
        assert len(ds) == 0

    def test_duplicate_id_named_in_error(self, tmp_path):
        records = [{"id": f"q{i}", "question": f"question {i}?", "answer": str(i)} for i in range(7)]
        records[5]["id"] = "q2"  # the duplicate
        # oracle: a set-membership scan over ids
        seen, dupes = set(), []
        for r in records:
            if r["id"] in seen:
                dupes.append(r["id"])
            seen.add(r["id"])
        assert dupes == ["q2"]
        path = write_jsonl(tmp_path / "dup.jsonl", records)
        with pytest.raises(CorpusError, match="q2"):
            load_dataset(path, TaskSchema.numeric())

    def test_malformed_record_names_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"id": "a", "question": "ok?"}\nnot json\n')
        with pytest.raises(CorpusError, match=":2"):
            load_dataset(path, TaskSchema.numeric())

    def test_uncanonicalizable_gold_names_id(self, tmp_path):
        path = write_jsonl(tmp_path / "g.jsonl", [{"id": "qx", "question": "hm?", "answer": "twelve"}])
        with pytest.raises(CorpusError, match="qx"):
            load_dataset(path, TaskSchema.numeric())

    def test_missing_question_field(self, tmp_path):
        path = write_jsonl(tmp_path / "m.jsonl", [{"id": "a", "answer": "1"}])
        with pytest.raises(CorpusError, match=":1"):
            load_dataset(path, TaskSchema.numeric())

    def test_ids_synthesized_from_line_numbers(self, tmp_path):
        path = write_jsonl(tmp_path / "anon.jsonl", [{"question": "one?"}, {"question": "two?"}])
        ds = load_dataset(path, TaskSchema.numeric(), name="anon")
        assert [q.id for q in ds.questions] == ["anon-1", "anon-2"]

    def test_loading_twice_is_identical(self, tmp_path):
        path = write_jsonl(
            tmp_path / "d.jsonl",
            [{"id": f"q{i}", "question": f"text {i}?", "answer": str(i)} for i in range(5)],
        )
        assert load_dataset(path, TaskSchema.numeric()) == load_dataset(path, TaskSchema.numeric())

    def test_partition_tags(self, tmp_path):
        path = write_jsonl(
            tmp_path / "drop.jsonl",
            [
                {"id": "f1", "question": "football?", "partition": "football", "answer": "1"},
                {"id": "n1", "question": "census?", "partition": "nonfootball", "answer": "2"},
            ],
        )
        ds = load_dataset(path, TaskSchema.numeric())
        assert all(q.partition_tag in ("football", "nonfootball") for q in ds.questions)

    def test_gold_canonicalized_via_normalizer(self, tmp_path):
        path = write_jsonl(tmp_path / "c.jsonl", [{"id": "q", "question": "cost?", "answer": "$1,392.0"}])
        ds = load_dataset(path, TaskSchema.numeric())
        assert ds.questions[0].gold == "1392"


class TestQuestion:
    def test_empty_text_rejected(self):
        with pytest.raises(ValueError):
            Question("q", "   ", TaskSchema.numeric())

    def test_dataset_rejects_duplicate_ids(self):
        schema = TaskSchema.numeric()
        qs = (Question("a", "x?", schema), Question("a", "y?", schema))
        with pytest.raises(CorpusError):
            Dataset("d", qs, schema)


class TestGoldGuard:
    def test_reads_counted(self):
        q = Question("q", "t?", TaskSchema.numeric(), gold="1")
        before = gold_read_count()
        assert q.gold == "1"
        assert gold_read_count() == before + 1

    def test_forbidden_reads_raise(self):
        q = Question("q", "t?", TaskSchema.numeric(), gold="1")
        with forbid_gold_reads():
            with pytest.raises(GoldReadError, match="q"):
                _ = q.gold
        assert q.gold == "1"  # flag restored

    def test_has_gold_does_not_count(self):
        q = Question("q", "t?", TaskSchema.numeric(), gold="1")
        before = gold_read_count()
        assert q.has_gold()
        assert gold_read_count() == before


class TestSampleSubset:
    def _dataset(self, n=10):
        schema = TaskSchema.numeric()
        return Dataset("d", tuple(Question(f"q{i}", f"text {i}?", schema) for i in range(n)), schema)

    def test_zero_request(self):
        assert len(sample_subset(self._dataset(), 0, 1)) == 0

    def test_full_request_returns_same_dataset(self):
        ds = self._dataset()
        assert sample_subset(ds, len(ds), 7) is ds
        assert sample_subset(ds, len(ds) + 5, 7) is ds

    def test_deterministic_for_fixed_seed(self):
        ds = self._dataset(10)
        first = [q.id for q in sample_subset(ds, 3, 42).questions]
        second = [q.id for q in sample_subset(ds, 3, 42).questions]
        assert first == second
        assert len(first) == 3

    def test_subset_preserves_order_without_repeats(self):
        ds = self._dataset(30)
        sub = sample_subset(ds, 11, 5)
        picked = [q.id for q in sub.questions]
        assert len(set(picked)) == 11
        original = [q.id for q in ds.questions]
        assert sorted(picked, key=original.index) == picked
        assert set(picked) <= set(original)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            sample_subset(self._dataset(), -1, 0)


def test_blank_lines_skipped(tmp_path):
    path = tmp_path / "blank.jsonl"
    path.write_text('{"id": "a", "question": "x?"}\n\n{"id": "b", "question": "y?"}\n')
    ds = load_dataset(path, TaskSchema.numeric())
    assert [q.id for q in ds.questions] == ["a", "b"]
