import json

import pytest

from selfcot.backend import MockBackend
from selfcot.corpus import gold_read_count
from selfcot.pipeline import (
    BackendOutageError,
    ConfigError,
    DatasetSpec,
    FinetuneManifest,
    RunConfig,
    RunPaths,
    planned_request_count,
    run_selfimprove,
)

from conftest import (
    BILL_OUTPUTS,
    BILL_QUESTION,
    CountingBackend,
    mock_for_pipeline,
    write_jsonl,
)


def _spec(path, **kwargs):
    kwargs.setdefault("schema_kind", "numeric")
    kwargs.setdefault("bank", "gsm8k")
    return DatasetSpec(path=str(path), **kwargs)


def _config(path, **kwargs):
    kwargs.setdefault("m", 3)
    kwargs.setdefault("max_in_flight", 2)
    return RunConfig(datasets=(_spec(path),), **kwargs)


def _read_jsonl(path):
    return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]


@pytest.fixture
def bill_dataset(tmp_path):
    return write_jsonl(tmp_path / "bill.jsonl", [{"id": "q1", "question": BILL_QUESTION}])


@pytest.fixture
def bill_backend():
    return mock_for_pipeline("gsm8k", {BILL_QUESTION: BILL_OUTPUTS})


class TestRunSelfImprove:
    def test_bill_replay_emits_eight_examples(self, tmp_path, bill_dataset, bill_backend):
        result = run_selfimprove(_config(bill_dataset), bill_backend, tmp_path / "run")
        records = _read_jsonl(result.export_path)
        assert len(records) == 8  # 2 retained paths x 4 formats
        assert {r["path_index"] for r in records} == {0, 2}
        assert all(r["question_id"] == "bill:q1" for r in records)
        assert all(r["confidence"] == pytest.approx(2 / 3) for r in records)
        assert sorted({r["format_id"] for r in records}) == [1, 2, 3, 4]
        by_format = {(r["path_index"], r["format_id"]): r for r in records}
        assert by_format[(0, 1)]["output"] == BILL_OUTPUTS[0]
        assert by_format[(2, 3)]["output"] == BILL_OUTPUTS[2]
        assert by_format[(0, 2)]["output"] == "The answer is 108."
        assert by_format[(0, 4)]["output"] == "The answer is 108."
        plain = _read_jsonl(result.plain_export_path)
        assert [set(r) for r in plain] == [{"input", "output"}] * 8

    def test_manifest_counts(self, tmp_path, bill_dataset, bill_backend):
        result = run_selfimprove(_config(bill_dataset), bill_backend, tmp_path / "run")
        mf = result.manifest
        assert mf.questions == 1
        assert mf.paths_sampled == 3
        assert mf.paths_extracted == 3
        assert mf.paths_retained == 2
        assert mf.examples_emitted == mf.paths_retained * 4
        assert mf.format_ratio == "1:1:1:1"

    def test_direct_answer_only_ablation(self, tmp_path, bill_dataset, bill_backend):
        cfg = _config(bill_dataset, formats=(2,))
        result = run_selfimprove(cfg, bill_backend, tmp_path / "run")
        records = _read_jsonl(result.export_path)
        assert len(records) == 2
        assert all(r["output"] == "The answer is 108." for r in records)
        assert result.manifest.examples_emitted == result.manifest.paths_retained * 1

    def test_empty_dataset(self, tmp_path):
        empty = tmp_path / "empty.jsonl"
        empty.write_text("")
        result = run_selfimprove(_config(empty), MockBackend({}), tmp_path / "run")
        mf = result.manifest
        assert (mf.questions, mf.paths_sampled, mf.examples_emitted) == (0, 0, 0)
        assert result.export_path.read_text() == ""

    def test_min_confidence_filters_questions(self, tmp_path):
        dataset = write_jsonl(
            tmp_path / "two.jsonl",
            [
                {"id": "sure", "question": "What is 2 plus 2?"},
                {"id": "shaky", "question": "What is 3 plus 3?"},
            ],
        )
        backend = mock_for_pipeline(
            "gsm8k",
            {
                "What is 2 plus 2?": ["The answer is 4."] * 3,
                "What is 3 plus 3?": ["The answer is 6.", "junk", "junk"],
            },
        )
        cfg = _config(dataset, min_confidence=0.5)
        result = run_selfimprove(cfg, backend, tmp_path / "run")
        records = _read_jsonl(result.export_path)
        assert {r["question_id"] for r in records} == {"two:sure"}
        assert result.manifest.paths_retained == 3

    def test_unsupervised_guard_zero_gold_reads(self, tmp_path):
        dataset = write_jsonl(
            tmp_path / "gold.jsonl",
            [{"id": "q1", "question": BILL_QUESTION, "answer": "108"}],
        )
        backend = mock_for_pipeline("gsm8k", {BILL_QUESTION: BILL_OUTPUTS})
        before = gold_read_count()
        result = run_selfimprove(_config(dataset), backend, tmp_path / "run")
        assert gold_read_count() == before
        assert result.manifest.examples_emitted == 8

    def test_multi_dataset_mixing_tags_question_ids(self, tmp_path):
        math = write_jsonl(tmp_path / "math.jsonl", [{"id": "m1", "question": "What is 1 plus 2?"}])
        facts = write_jsonl(tmp_path / "facts.jsonl", [{"id": "f1", "question": "Is water wet?"}])
        backend_map = {}
        from selfcot.prompting import bank_templates, render_prompt

        backend_map[render_prompt(bank_templates("gsm8k").fewshot_cot, "What is 1 plus 2?")] = [
            "The answer is 3."
        ] * 3
        backend_map[render_prompt(bank_templates("strategyqa").fewshot_cot, "Is water wet?")] = [
            "The answer is yes."
        ] * 3
        backend = MockBackend.from_prompts(backend_map)
        cfg = RunConfig(
            datasets=(
                _spec(math),
                DatasetSpec(path=str(facts), schema_kind="yes_no", bank="strategyqa"),
            ),
            m=3,
        )
        result = run_selfimprove(cfg, backend, tmp_path / "run")
        ids = {r["question_id"] for r in _read_jsonl(result.export_path)}
        assert ids == {"math:m1", "facts:f1"}
        assert result.manifest.questions == 2


class TestDeterminismAndCache:
    def test_reruns_are_byte_identical(self, tmp_path, bill_dataset, bill_backend):
        cfg = _config(bill_dataset)
        first = run_selfimprove(cfg, bill_backend, tmp_path / "run1")
        second = run_selfimprove(cfg, bill_backend, tmp_path / "run2")
        assert first.export_path.read_bytes() == second.export_path.read_bytes()
        paths1, paths2 = RunPaths(tmp_path / "run1"), RunPaths(tmp_path / "run2")
        assert paths1.manifest.read_bytes() == paths2.manifest.read_bytes()
        assert paths1.finetune.read_bytes() == paths2.finetune.read_bytes()

    def test_warm_cache_issues_no_backend_calls(self, tmp_path, bill_dataset, bill_backend):
        cfg = _config(bill_dataset)
        run_selfimprove(cfg, bill_backend, tmp_path / "run")
        counting = CountingBackend(bill_backend)
        result = run_selfimprove(cfg, counting, tmp_path / "run", resume=False)
        assert counting.calls == 0
        assert result.manifest.cache_hits == 1
        assert result.manifest.examples_emitted == 8

    def test_complete_checkpoint_short_circuits(self, tmp_path, bill_dataset, bill_backend):
        cfg = _config(bill_dataset)
        first = run_selfimprove(cfg, bill_backend, tmp_path / "run")
        counting = CountingBackend(bill_backend)
        second = run_selfimprove(cfg, counting, tmp_path / "run")  # resume over complete run
        assert counting.calls == 0
        assert second.manifest.examples_emitted == first.manifest.examples_emitted
        assert first.export_path.read_bytes() == second.export_path.read_bytes()


class TestResume:
    def _six_questions(self, tmp_path):
        records = [{"id": f"q{i}", "question": f"What is {i} plus {i}?"} for i in range(6)]
        return write_jsonl(tmp_path / "six.jsonl", records), {
            r["question"]: [f"The answer is {2 * i}."] * 3 for i, r in enumerate(records)
        }

    def test_outage_halts_then_resume_matches_clean_run(self, tmp_path):
        dataset, full_map = self._six_questions(tmp_path)
        cfg = _config(dataset, max_in_flight=1)

        clean = run_selfimprove(cfg, mock_for_pipeline("gsm8k", full_map), tmp_path / "clean")

        partial_map = {q: t for q, t in full_map.items() if "3 plus 3" not in q}
        with pytest.raises(BackendOutageError, match="six:q3"):
            run_selfimprove(cfg, mock_for_pipeline("gsm8k", partial_map), tmp_path / "resumed")

        ckpt = RunPaths(tmp_path / "resumed").checkpoint
        done = [json.loads(l)["question_id"] for l in ckpt.read_text().splitlines()]
        assert done == ["six:q0", "six:q1", "six:q2"]

        resumed = run_selfimprove(cfg, mock_for_pipeline("gsm8k", full_map), tmp_path / "resumed")
        assert resumed.export_path.read_bytes() == clean.export_path.read_bytes()
        assert resumed.manifest.questions == 6
        assert resumed.manifest.examples_emitted == clean.manifest.examples_emitted

    def test_resume_with_changed_config_rejected(self, tmp_path, bill_dataset, bill_backend):
        run_selfimprove(_config(bill_dataset), bill_backend, tmp_path / "run")
        changed = _config(bill_dataset, min_confidence=0.9)
        with pytest.raises(ConfigError, match="config"):
            run_selfimprove(changed, bill_backend, tmp_path / "run")


class TestShuffledExports:
    def test_shuffle_is_deterministic_and_content_preserving(self, tmp_path, bill_dataset, bill_backend):
        plain_cfg = _config(bill_dataset)
        shuffled_cfg = _config(bill_dataset, shuffle_exports=True)
        base = run_selfimprove(plain_cfg, bill_backend, tmp_path / "base")
        one = run_selfimprove(shuffled_cfg, bill_backend, tmp_path / "s1")
        two = run_selfimprove(shuffled_cfg, bill_backend, tmp_path / "s2")
        assert one.export_path.read_bytes() == two.export_path.read_bytes()
        assert sorted(one.export_path.read_text().splitlines()) == sorted(
            base.export_path.read_text().splitlines()
        )
        # plain export follows the shuffled order
        plain = _read_jsonl(one.plain_export_path)
        full = _read_jsonl(one.export_path)
        assert [p["input"] for p in plain] == [f["input"] for f in full]

    def test_refinalizing_a_complete_run_is_idempotent(self, tmp_path, bill_dataset, bill_backend):
        cfg = _config(bill_dataset, shuffle_exports=True)
        first = run_selfimprove(cfg, bill_backend, tmp_path / "run")
        snapshot = first.export_path.read_bytes()
        second = run_selfimprove(cfg, bill_backend, tmp_path / "run")
        assert second.export_path.read_bytes() == snapshot


class TestRunConfig:
    def test_defaults_match_headline_setting(self, tmp_path):
        cfg = RunConfig(datasets=(_spec(tmp_path / "d.jsonl"),))
        assert cfg.m == 32
        assert cfg.gen_temperature == 0.7
        assert cfg.eval_temperature_post == 1.2
        assert cfg.max_tokens == 256
        assert cfg.formats == (1, 2, 3, 4)

    def test_ul2_preset(self, tmp_path):
        cfg = RunConfig.from_dict(
            {"preset": "ul2", "datasets": [{"path": str(tmp_path / "d.jsonl"), "schema_kind": "numeric"}]}
        )
        assert cfg.m == 40
        assert cfg.gen_temperature == 0.5
        assert cfg.eval_temperature_post == 0.7

    def test_preset_does_not_override_explicit_values(self, tmp_path):
        cfg = RunConfig.from_dict(
            {
                "preset": "ul2",
                "m": 12,
                "datasets": [{"path": str(tmp_path / "d.jsonl"), "schema_kind": "numeric"}],
            }
        )
        assert cfg.m == 12
        assert cfg.gen_temperature == 0.5

    @pytest.mark.parametrize(
        "overrides,fieldname",
        [
            ({"m": 0}, "m"),
            ({"formats": ()}, "formats"),
            ({"formats": (1, 5)}, "formats"),
            ({"gen_temperature": 0.0}, "gen_temperature"),
            ({"min_confidence": 1.5}, "min_confidence"),
            ({"max_in_flight": 0}, "max_in_flight"),
        ],
    )
    def test_validation_names_field(self, tmp_path, overrides, fieldname):
        cfg = RunConfig(datasets=(_spec(tmp_path / "d.jsonl"),), **overrides)
        with pytest.raises(ConfigError) as err:
            cfg.validate()
        assert err.value.fieldname == fieldname

    def test_no_datasets_rejected(self):
        with pytest.raises(ConfigError):
            RunConfig(datasets=()).validate()

    def test_unknown_field_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            RunConfig.from_dict(
                {"datasets": [{"path": "x", "schema_kind": "numeric"}], "mystery": 1}
            )

    def test_unknown_preset_rejected(self):
        with pytest.raises(ConfigError, match="preset"):
            RunConfig.from_dict({"preset": "warpdrive", "datasets": []})

    def test_planned_request_count(self, tmp_path):
        dataset = write_jsonl(
            tmp_path / "d.jsonl", [{"id": f"q{i}", "question": f"{i} plus {i}?"} for i in range(7)]
        )
        cfg = _config(dataset)
        assert planned_request_count(cfg) == 7
        subset_cfg = RunConfig(datasets=(_spec(dataset, subset=4),), m=3)
        assert planned_request_count(subset_cfg) == 4


def test_finetune_manifest_defaults():
    mf = FinetuneManifest("path", "digest")
    assert mf.steps == 10000
    assert mf.learning_rate == 5e-5
    assert mf.batch_size == 32
