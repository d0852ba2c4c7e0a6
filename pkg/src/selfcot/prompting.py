"""Prompt assembly for the four prompting styles and mixed-format augmentation.

A retained reasoning path is turned into four training examples:

  1. few-shot CoT exemplars + question -> full reasoning path
  2. few-shot direct-answer exemplars + question -> "The answer is X."
  3. question + "A: Let's think step by step." -> full reasoning path
  4. question + "A:" -> "The answer is X."

Exemplar blocks render as "Q: <question>\\nA: <reasoning>", joined by single
newlines; the target question is appended bare, then the answer cue. Path
texts are used verbatim as outputs so replayed fixtures match byte-for-byte.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from enum import Enum
from importlib import resources
from typing import Iterable, Sequence

from .backend import SampledPath
from .corpus import Question
from .extraction import ANSWER_MARKER, final_answer_sentence

STEP_BY_STEP_CUE = "A: Let's think step by step."
DIRECT_CUE = "A:"


class PromptError(Exception):
    """Invalid template or exemplar."""


class PromptTooLongError(PromptError):
    """Rendered prompt exceeded the configured character cap."""


class PromptStyle(str, Enum):
    FEWSHOT_COT = "fewshot_cot"
    FEWSHOT_STANDARD = "fewshot_standard"
    ZEROSHOT_COT = "zeroshot_cot"
    ZEROSHOT_DIRECT = "zeroshot_direct"


_FEWSHOT_STYLES = (PromptStyle.FEWSHOT_COT, PromptStyle.FEWSHOT_STANDARD)


@dataclass(frozen=True)
class Exemplar:
    """One worked example: question, reasoning path, canonical answer.

    Reasoning may be empty (direct-answer exemplars); when present it must
    contain an answer sentence so it can be stripped for standard prompting.
    """

    question: str
    reasoning: str
    answer: str

    def __post_init__(self) -> None:
        if self.reasoning and ANSWER_MARKER not in self.reasoning.lower():
            raise PromptError(
                f"exemplar reasoning lacks an answer sentence: {self.reasoning[:60]!r}"
            )


@dataclass(frozen=True)
class PromptTemplate:
    style: PromptStyle
    exemplars: tuple[Exemplar, ...] = ()

    def __post_init__(self) -> None:
        if self.style in _FEWSHOT_STYLES and not self.exemplars:
            raise PromptError(f"{self.style.value} template needs at least one exemplar")
        if self.style not in _FEWSHOT_STYLES and self.exemplars:
            raise PromptError(f"{self.style.value} template takes no exemplars")


@dataclass(frozen=True)
class TrainingExample:
    input: str
    output: str
    format_id: int
    question_id: str
    path_index: int

    def __post_init__(self) -> None:
        if self.format_id not in (1, 2, 3, 4):
            raise ValueError(f"format_id must be 1..4, got {self.format_id}")


def _exemplar_line(exemplar: Exemplar) -> str:
    return exemplar.reasoning or f"The answer is {exemplar.answer}."


def render_prompt(template: PromptTemplate, question: Question | str, *, max_chars: int | None = None) -> str:
    """Render a question under a prompting style."""
    text = question.text if isinstance(question, Question) else str(question)
    if template.style is PromptStyle.ZEROSHOT_COT:
        prompt = text + "\n" + STEP_BY_STEP_CUE
    elif template.style is PromptStyle.ZEROSHOT_DIRECT:
        prompt = text + "\n" + DIRECT_CUE
    else:
        blocks = [f"Q: {e.question}\nA: {_exemplar_line(e)}" for e in template.exemplars]
        prompt = "\n".join(blocks) + "\n" + text + "\n" + DIRECT_CUE
    if max_chars is not None and len(prompt) > max_chars:
        raise PromptTooLongError(f"prompt is {len(prompt)} chars, cap is {max_chars}")
    return prompt


def strip_reasoning(exemplar: Exemplar) -> Exemplar:
    """Reduce an exemplar's reasoning to its final answer sentence."""
    if not exemplar.reasoning:
        raise PromptError("exemplar has no reasoning to strip")
    sentence = final_answer_sentence(exemplar.reasoning)
    if sentence is None:
        raise PromptError(f"no answer sentence in reasoning: {exemplar.reasoning[:60]!r}")
    return replace(exemplar, reasoning=sentence)


@dataclass(frozen=True)
class FormatTemplates:
    """The four templates a reasoning path is augmented under."""

    fewshot_cot: PromptTemplate
    fewshot_standard: PromptTemplate
    zeroshot_cot: PromptTemplate
    zeroshot_direct: PromptTemplate

    @classmethod
    def from_cot_exemplars(cls, exemplars: Iterable[Exemplar]) -> "FormatTemplates":
        """Build all four styles from one CoT exemplar list.

        Standard-prompting exemplars are the same question-answer pairs with
        the reasoning reduced to the final answer sentence.
        """
        cot = tuple(exemplars)
        return cls(
            fewshot_cot=PromptTemplate(PromptStyle.FEWSHOT_COT, cot),
            fewshot_standard=PromptTemplate(
                PromptStyle.FEWSHOT_STANDARD, tuple(strip_reasoning(e) for e in cot)
            ),
            zeroshot_cot=PromptTemplate(PromptStyle.ZEROSHOT_COT),
            zeroshot_direct=PromptTemplate(PromptStyle.ZEROSHOT_DIRECT),
        )


def augment_path(
    question: Question,
    path: SampledPath,
    answer: str,
    templates: FormatTemplates,
) -> list[TrainingExample]:
    """Render one retained path into the four training formats.

    The caller must have checked that the path's extracted answer equals the
    consensus answer passed here.
    """
    sentence = f"The answer is {answer}."
    rows = (
        (1, templates.fewshot_cot, path.text),
        (2, templates.fewshot_standard, sentence),
        (3, templates.zeroshot_cot, path.text),
        (4, templates.zeroshot_direct, sentence),
    )
    return [
        TrainingExample(
            input=render_prompt(template, question),
            output=output,
            format_id=format_id,
            question_id=path.question_id,
            path_index=path.path_index,
        )
        for format_id, template, output in rows
    ]


# Bundled few-shot CoT banks, one JSONL file per task family. Some dataset
# names share a bank (the math bank covers GSM8K and SVAMP; one NLI bank
# covers the ANLI and MNLI variants).
_BANK_ALIASES = {
    "svamp": "gsm8k",
    "nli": "anli",
    "mnli": "anli",
    "anli-a1": "anli",
    "anli-a2": "anli",
    "anli-a3": "anli",
    "mnli-m": "anli",
    "mnli-mm": "anli",
    "arc-c": "arc",
    "arc_challenge": "arc",
    "drop-football": "drop_football",
    "drop-nonfootball": "drop_nonfootball",
}

PROMPT_BANKS = (
    "gsm8k",
    "drop_football",
    "drop_nonfootball",
    "openbookqa",
    "arc",
    "aqua",
    "anli",
    "strategyqa",
    "rte",
)


def load_prompt_bank(name: str) -> tuple[Exemplar, ...]:
    """Load a bundled exemplar bank by dataset name."""
    key = _BANK_ALIASES.get(name.lower(), name.lower())
    if key not in PROMPT_BANKS:
        known = sorted(PROMPT_BANKS + tuple(_BANK_ALIASES))
        raise PromptError(f"unknown prompt bank {name!r}; known banks: {known}")
    text = resources.files("selfcot").joinpath(f"prompts/{key}.jsonl").read_text(encoding="utf-8")
    exemplars = []
    for line in text.splitlines():
        if not line.strip():
            continue
        record = json.loads(line)
        exemplars.append(
            Exemplar(question=record["question"], reasoning=record["reasoning"], answer=record["answer"])
        )
    return tuple(exemplars)


def bank_templates(name: str) -> FormatTemplates:
    return FormatTemplates.from_cot_exemplars(load_prompt_bank(name))


def load_exemplar_file(path) -> tuple[Exemplar, ...]:
    """Load exemplars from a user-supplied JSONL file (same record format as the banks)."""
    exemplars = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            record = json.loads(line)
            exemplars.append(
                Exemplar(question=record["question"], reasoning=record["reasoning"], answer=record["answer"])
            )
    return tuple(exemplars)


def save_exemplars(path, exemplars: Sequence[Exemplar]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in exemplars:
            fh.write(json.dumps({"question": e.question, "reasoning": e.reasoning, "answer": e.answer}) + "\n")
