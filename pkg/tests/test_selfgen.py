import logging

import pytest

from selfcot.backend import Backend, MockBackend, prompt_digest
from selfcot.corpus import Question, TaskSchema
from selfcot.prompting import PromptStyle, PromptTemplate, render_prompt
from selfcot.selfgen import (
    ExemplarShortfallError,
    GeneratedQuestion,
    generate_prompt_templates,
    generate_questions,
    load_template_set,
    save_generated_questions,
    save_template_set,
    screen_questions,
)

NUMERIC = TaskSchema.numeric()


def _seeds(n):
    return [Question(f"seed-{i}", f"What is {i} plus {i}?", NUMERIC) for i in range(n)]


class _FixedBackend(Backend):
    """Same continuation for every prompt."""

    backend_id = "fixed"

    def __init__(self, text):
        self.text = text

    def complete(self, req):
        return [self.text] * req.n_samples


class _EchoBackend(Backend):
    """Continuation derived from the prompt digest: distinct prompt, distinct text."""

    backend_id = "echo"

    def complete(self, req):
        tag = prompt_digest(req.prompt)[:10]
        return [f" What is the value of {tag}?"] * req.n_samples


class TestGenerateQuestions:
    def test_fixed_continuation_collapses_to_one(self, caplog):
        seeds = _seeds(6)
        with caplog.at_level(logging.WARNING):
            got = generate_questions(seeds, 3, 5, _FixedBackend(" What is 7 plus 9?"), rng_seed=0, attempt_cap=12)
        assert len(got) == 1
        assert got[0].text == "What is 7 plus 9?"
        assert "attempt cap" in caplog.text  # partial result warns instead of failing

    def test_distinct_candidates_record_their_seeds(self):
        seeds = _seeds(10)
        got = generate_questions(seeds, 4, 20, _EchoBackend(), rng_seed=42)
        assert len(got) == 20
        assert len({g.text for g in got}) == 20
        seed_ids = {q.id for q in seeds}
        for g in got:
            assert len(g.source_seed_ids) == 4
            assert set(g.source_seed_ids) <= seed_ids

    def test_zero_target(self):
        assert generate_questions(_seeds(4), 2, 0, _FixedBackend("x"), rng_seed=0) == []

    def test_seed_duplicates_dropped(self):
        seeds = _seeds(4)
        backend = _FixedBackend(" " + seeds[0].text)
        assert generate_questions(seeds, 2, 3, backend, rng_seed=0, attempt_cap=6) == []

    def test_deterministic_given_seed(self):
        seeds = _seeds(8)
        first = generate_questions(seeds, 3, 10, _EchoBackend(), rng_seed=5)
        second = generate_questions(seeds, 3, 10, _EchoBackend(), rng_seed=5)
        assert first == second

    def test_k_concat_validated(self):
        with pytest.raises(ValueError):
            generate_questions(_seeds(2), 3, 1, _FixedBackend("x"), rng_seed=0)


def _screen_backend(agree, absent, m, template, candidate_text, answer="5"):
    """Fixture where `agree` paths say the answer, `absent` paths say nothing."""
    texts = [f"Step by step. The answer is {answer}." for _ in range(agree)]
    texts += ["I cannot work this out." for _ in range(absent)]
    assert len(texts) == m
    prompt = render_prompt(template, candidate_text)
    return MockBackend.from_prompts({prompt: texts})


class TestScreenQuestions:
    TEMPLATE = PromptTemplate(PromptStyle.ZEROSHOT_COT)

    def test_confident_candidate_kept_with_confidence(self):
        cand = GeneratedQuestion("What is 3 plus 2?", ("s1",))
        backend = _screen_backend(24, 8, 32, self.TEMPLATE, cand.text)
        kept = screen_questions([cand], backend, 32, 0.6, template=self.TEMPLATE, schema=NUMERIC)
        assert len(kept) == 1
        assert kept[0].confidence == 24 / 32

    def test_threshold_one_keeps_only_unanimous(self):
        cand = GeneratedQuestion("What is 3 plus 2?", ("s1",))
        backend = _screen_backend(31, 1, 32, self.TEMPLATE, cand.text)
        assert screen_questions([cand], backend, 32, 1.0, template=self.TEMPLATE, schema=NUMERIC) == []
        backend = _screen_backend(32, 0, 32, self.TEMPLATE, cand.text)
        kept = screen_questions([cand], backend, 32, 1.0, template=self.TEMPLATE, schema=NUMERIC)
        assert len(kept) == 1 and kept[0].confidence == 1.0

    def test_threshold_zero_keeps_any_consensus(self):
        cand = GeneratedQuestion("What is 3 plus 2?", ("s1",))
        backend = _screen_backend(1, 31, 32, self.TEMPLATE, cand.text)
        kept = screen_questions([cand], backend, 32, 0.0, template=self.TEMPLATE, schema=NUMERIC)
        assert len(kept) == 1

    def test_no_consensus_dropped_even_at_zero_threshold(self):
        cand = GeneratedQuestion("What is 3 plus 2?", ("s1",))
        backend = _screen_backend(0, 32, 32, self.TEMPLATE, cand.text)
        assert screen_questions([cand], backend, 32, 0.0, template=self.TEMPLATE, schema=NUMERIC) == []

    def test_threshold_validated(self):
        with pytest.raises(ValueError):
            screen_questions([], _FixedBackend("x"), 4, 1.5, template=self.TEMPLATE, schema=NUMERIC)


class _MaskedBackend(Backend):
    """Extraction succeeds only for questions whose index passes the mask."""

    backend_id = "masked"

    def __init__(self, mask):
        self.mask = mask  # question text -> bool

    def complete(self, req):
        for text, ok in self.mask.items():
            if text in req.prompt:
                if ok:
                    return ["Work it through. The answer is 7."] * req.n_samples
                return ["No final sentence here."] * req.n_samples
        raise AssertionError("unknown prompt")


class TestGeneratePromptTemplates:
    def test_minimal_single_template(self):
        questions = _seeds(1)
        backend = _MaskedBackend({questions[0].text: True})
        got = generate_prompt_templates(questions, backend, 1, 1, schema=NUMERIC)
        assert got.n_templates == 1
        exemplar = got.templates[0].exemplars[0]
        assert exemplar.question == questions[0].text
        assert exemplar.reasoning.endswith("The answer is 7.")
        assert exemplar.answer == "7"

    def test_templates_are_disjoint(self):
        questions = _seeds(40)
        backend = _MaskedBackend({q.text: True for q in questions})
        got = generate_prompt_templates(questions, backend, 4, 8, schema=NUMERIC, rng_seed=3)
        seen = set()
        for template in got.templates:
            assert len(template.exemplars) == 4
            for exemplar in template.exemplars:
                assert exemplar.question not in seen
                seen.add(exemplar.question)
        assert len(seen) == 32

    def test_half_failing_mask_supports_up_to_the_valid_count(self):
        questions = _seeds(200)
        mask = {q.text: i % 2 == 0 for i, q in enumerate(questions)}
        backend = _MaskedBackend(mask)
        got = generate_prompt_templates(questions, backend, 4, 20, schema=NUMERIC, rng_seed=1)
        assert sum(len(t.exemplars) for t in got.templates) == 80

    def test_shortfall_reported(self):
        questions = _seeds(200)
        mask = {q.text: i < 20 for i, q in enumerate(questions)}  # only 20 parse
        backend = _MaskedBackend(mask)
        with pytest.raises(ExemplarShortfallError) as err:
            generate_prompt_templates(questions, backend, 4, 20, schema=NUMERIC)
        assert err.value.needed == 80
        assert err.value.got == 20

    def test_too_few_questions_rejected(self):
        with pytest.raises(ValueError):
            generate_prompt_templates(_seeds(3), _FixedBackend("x"), 2, 2, schema=NUMERIC)

    def test_deterministic_and_persistable(self, tmp_path):
        questions = _seeds(30)
        backend = _MaskedBackend({q.text: True for q in questions})
        first = generate_prompt_templates(questions, backend, 3, 5, schema=NUMERIC, rng_seed=9)
        second = generate_prompt_templates(questions, backend, 3, 5, schema=NUMERIC, rng_seed=9)
        assert first == second
        path = tmp_path / "templates.jsonl"
        save_template_set(path, first)
        assert load_template_set(path) == first


def test_generated_questions_roundtrip_as_dataset(tmp_path):
    from selfcot.corpus import load_dataset

    items = [GeneratedQuestion("What is 1 plus 1?", ("s1", "s2"), 0.75)]
    path = tmp_path / "generated.jsonl"
    save_generated_questions(path, items)
    ds = load_dataset(path, NUMERIC)
    assert len(ds) == 1
    assert ds.questions[0].text == "What is 1 plus 1?"
