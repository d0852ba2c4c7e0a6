"""Self-generation of training questions and few-shot CoT prompt templates.

Question generation concatenates a few seed questions as "Q:" blocks and asks
the backend to continue with a new one; candidates are screened by the usual
sample-extract-vote loop and kept only when the consensus is confident.
Prompt-template generation answers questions zero-shot with the step-by-step
cue under greedy decoding, keeps generations whose answer parses, and groups
them into disjoint few-shot templates.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

from .backend import Backend, CompletionRequest, complete_batch
from .consensus import vote
from .corpus import Question, TaskSchema
from .extraction import extract_answer, truncate_after_answer
from .prompting import (
    Exemplar,
    PromptStyle,
    PromptTemplate,
    render_prompt,
)

log = logging.getLogger(__name__)

QUESTION_CUE = "Q:"


class ExemplarShortfallError(Exception):
    """Not enough extractable generations to fill the requested templates."""

    def __init__(self, needed: int, got: int):
        super().__init__(f"needed {needed} valid exemplars, only {got} generations had parseable answers")
        self.needed = needed
        self.got = got


@dataclass(frozen=True)
class GeneratedQuestion:
    text: str
    source_seed_ids: tuple[str, ...]
    confidence: float = 0.0


@dataclass(frozen=True)
class GeneratedTemplateSet:
    templates: tuple[PromptTemplate, ...]
    shots_per_template: int
    n_templates: int


def _concat_prompt(picked: Sequence[Question]) -> str:
    blocks = "\n".join(f"{QUESTION_CUE} {q.text}" for q in picked)
    return blocks + "\n" + QUESTION_CUE


def generate_questions(
    seeds: Sequence[Question],
    k_concat: int,
    n_target: int,
    backend: Backend,
    rng_seed: int,
    *,
    temperature: float = 0.7,
    max_tokens: int = 256,
    max_in_flight: int = 8,
    attempt_cap: int | None = None,
) -> list[GeneratedQuestion]:
    """Generate up to ``n_target`` new questions by continuing seed concatenations.

    Each attempt shuffles ``k_concat`` seeds into a prompt of "Q:" blocks and
    takes the continuation up to the next "Q:" block as one candidate. Exact
    duplicates of seeds or earlier candidates are dropped. If the attempt cap
    is reached first, the partial list is returned with a warning.
    """
    if not 1 <= k_concat <= len(seeds):
        raise ValueError("need |seeds| >= k_concat >= 1")
    if n_target < 0:
        raise ValueError("n_target must be >= 0")
    if attempt_cap is None:
        attempt_cap = max(8 * n_target, 32)

    rng = random.Random(rng_seed)
    seed_texts = {q.text for q in seeds}
    got: list[GeneratedQuestion] = []
    seen: set[str] = set()
    attempts = 0
    while len(got) < n_target and attempts < attempt_cap:
        round_size = min(n_target - len(got), attempt_cap - attempts)
        picks = []
        for _ in range(round_size):
            picked = rng.sample(list(seeds), k_concat)
            rng.shuffle(picked)
            picks.append(picked)
        reqs = [
            CompletionRequest(
                prompt=_concat_prompt(picked),
                temperature=temperature,
                max_tokens=max_tokens,
                n_samples=1,
                stop=("\n" + QUESTION_CUE,),
                seed=rng_seed + attempts + i,
            )
            for i, picked in enumerate(picks)
        ]
        attempts += round_size
        results = complete_batch(backend, reqs, max_in_flight)
        for picked, result in zip(picks, results):
            if isinstance(result, Exception):
                log.warning("question generation attempt failed: %s", result)
                continue
            candidate = result[0].strip()
            if not candidate or candidate in seed_texts or candidate in seen:
                continue
            seen.add(candidate)
            got.append(GeneratedQuestion(text=candidate, source_seed_ids=tuple(q.id for q in picked)))
            if len(got) >= n_target:
                break
    if len(got) < n_target:
        log.warning("question generation hit the attempt cap: %d of %d candidates", len(got), n_target)
    return got


def screen_questions(
    candidates: Sequence[GeneratedQuestion],
    backend: Backend,
    m: int,
    threshold: float,
    *,
    template: PromptTemplate,
    schema: TaskSchema,
    temperature: float = 0.7,
    max_tokens: int = 256,
    max_in_flight: int = 8,
    seed: int = 0,
) -> list[GeneratedQuestion]:
    """Keep candidates whose majority-voted answer reaches the confidence threshold."""
    if not 0 <= threshold <= 1:
        raise ValueError("threshold must be in [0, 1]")
    reqs = [
        CompletionRequest(
            prompt=render_prompt(template, cand.text),
            temperature=temperature,
            max_tokens=max_tokens,
            n_samples=m,
            stop=("\n" + QUESTION_CUE,),
            seed=seed,
        )
        for cand in candidates
    ]
    results = complete_batch(backend, reqs, max_in_flight)
    kept: list[GeneratedQuestion] = []
    for cand, result in zip(candidates, results):
        if isinstance(result, Exception):
            log.warning("screening failed for a candidate: %s", result)
            continue
        canonicals = []
        for text in result:
            extracted = extract_answer(text, schema)
            canonicals.append(extracted.canonical if extracted else None)
        consensus = vote(list(enumerate(canonicals)), m, schema)
        if consensus.answer is not None and consensus.confidence >= threshold:
            kept.append(replace(cand, confidence=consensus.confidence))
    return kept


def generate_prompt_templates(
    questions: Sequence[Question],
    backend: Backend,
    shots_per_template: int,
    n_templates: int,
    *,
    schema: TaskSchema,
    rng_seed: int = 0,
    max_tokens: int = 256,
    max_in_flight: int = 8,
) -> GeneratedTemplateSet:
    """Build few-shot CoT templates from greedy zero-shot step-by-step answers.

    Questions are visited in a seeded random order; generations whose answer
    fails to parse are discarded. Raises :class:`ExemplarShortfallError` when
    fewer than ``shots_per_template * n_templates`` valid exemplars come back.
    """
    if shots_per_template < 1 or n_templates < 1:
        raise ValueError("shots_per_template and n_templates must be >= 1")
    needed = shots_per_template * n_templates
    if len(questions) < needed:
        raise ValueError(f"need at least {needed} questions, got {len(questions)}")

    order = list(questions)
    random.Random(rng_seed).shuffle(order)
    zeroshot = PromptTemplate(PromptStyle.ZEROSHOT_COT)
    reqs = [
        CompletionRequest(
            prompt=render_prompt(zeroshot, q),
            temperature=0.0,
            max_tokens=max_tokens,
            n_samples=1,
            stop=("\n" + QUESTION_CUE,),
            seed=rng_seed,
        )
        for q in order
    ]
    results = complete_batch(backend, reqs, max_in_flight)
    exemplars: list[Exemplar] = []
    for q, result in zip(order, results):
        if isinstance(result, Exception):
            log.warning("exemplar generation failed for %s: %s", q.id, result)
            continue
        text = result[0]
        extracted = extract_answer(text, schema)
        if extracted is None:
            continue
        reasoning = truncate_after_answer(text)
        assert reasoning is not None  # extract_answer found the marker
        exemplars.append(Exemplar(question=q.text, reasoning=reasoning.strip(), answer=extracted.canonical))
        if len(exemplars) >= needed:
            break
    if len(exemplars) < needed:
        raise ExemplarShortfallError(needed, len(exemplars))

    templates = tuple(
        PromptTemplate(
            PromptStyle.FEWSHOT_COT,
            tuple(exemplars[i * shots_per_template : (i + 1) * shots_per_template]),
        )
        for i in range(n_templates)
    )
    return GeneratedTemplateSet(templates=templates, shots_per_template=shots_per_template, n_templates=n_templates)


def save_generated_questions(path: str | Path, items: Sequence[GeneratedQuestion]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for item in items:
            fh.write(
                json.dumps(
                    {
                        "question": item.text,
                        "source_seed_ids": list(item.source_seed_ids),
                        "confidence": item.confidence,
                    }
                )
                + "\n"
            )


def save_template_set(path: str | Path, template_set: GeneratedTemplateSet) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for index, template in enumerate(template_set.templates):
            for exemplar in template.exemplars:
                fh.write(
                    json.dumps(
                        {
                            "template_index": index,
                            "question": exemplar.question,
                            "reasoning": exemplar.reasoning,
                            "answer": exemplar.answer,
                        }
                    )
                    + "\n"
                )


def load_template_set(path: str | Path) -> GeneratedTemplateSet:
    by_index: dict[int, list[Exemplar]] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            record = json.loads(line)
            by_index.setdefault(int(record["template_index"]), []).append(
                Exemplar(record["question"], record["reasoning"], record["answer"])
            )
    templates = tuple(
        PromptTemplate(PromptStyle.FEWSHOT_COT, tuple(by_index[i])) for i in sorted(by_index)
    )
    shots = len(templates[0].exemplars) if templates else 0
    return GeneratedTemplateSet(templates=templates, shots_per_template=shots, n_templates=len(templates))
