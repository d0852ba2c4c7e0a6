"""Accuracy evaluation under standard, greedy CoT, and self-consistency prompting.

Greedy methods issue one temperature-zero sample per question;
self-consistency samples ``m`` paths at the given temperature and majority
votes. A question whose backend call fails, or whose answer cannot be parsed,
counts as incorrect so accuracy denominators stay comparable across methods.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence

from .backend import Backend, CompletionRequest, complete_batch
from .consensus import vote
from .corpus import Dataset
from .extraction import answers_equal, extract_answer
from .prompting import PromptTemplate, render_prompt

DEFAULT_STOP = ("\nQ:",)


class EvalMethod(str, Enum):
    STANDARD = "standard"
    COT_GREEDY = "cot_greedy"
    SELF_CONSISTENCY = "self_consistency"


@dataclass(frozen=True)
class QuestionOutcome:
    question_id: str
    predicted: str | None
    correct: bool
    tie: bool = False
    note: str = ""


@dataclass(frozen=True)
class EvalReport:
    dataset: str
    method: EvalMethod
    m: int
    temperature: float
    accuracy: float
    per_question: tuple[QuestionOutcome, ...]


def evaluate(
    ds: Dataset,
    template: PromptTemplate,
    backend: Backend,
    method: EvalMethod,
    m: int = 1,
    temperature: float = 0.0,
    *,
    max_tokens: int = 256,
    stop: Sequence[str] = DEFAULT_STOP,
    seed: int = 0,
    max_in_flight: int = 8,
) -> EvalReport:
    """Evaluate a backend on a gold-bearing dataset under one prompting method."""
    missing = [q.id for q in ds.questions if not q.has_gold()]
    if missing:
        raise ValueError(f"evaluation needs gold answers; missing for {missing[:5]}")
    if method is EvalMethod.SELF_CONSISTENCY:
        if m < 1:
            raise ValueError("self_consistency needs m >= 1")
        if temperature <= 0:
            raise ValueError("self_consistency needs temperature > 0")
        n, t = m, temperature
    else:
        n, t = 1, 0.0

    reqs = [
        CompletionRequest(
            prompt=render_prompt(template, q),
            temperature=t,
            max_tokens=max_tokens,
            n_samples=n,
            stop=tuple(stop),
            seed=seed,
        )
        for q in ds.questions
    ]
    results = complete_batch(backend, reqs, max_in_flight)

    outcomes: list[QuestionOutcome] = []
    n_correct = 0
    for q, result in zip(ds.questions, results):
        if isinstance(result, Exception):
            outcomes.append(QuestionOutcome(q.id, None, False, note=f"backend failure: {result}"))
            continue
        canonicals = []
        for text in result:
            extracted = extract_answer(text, ds.schema)
            canonicals.append(extracted.canonical if extracted else None)
        tie = False
        if method is EvalMethod.SELF_CONSISTENCY:
            consensus = vote(list(enumerate(canonicals)), n, ds.schema, question_id=q.id)
            predicted, tie = consensus.answer, consensus.tie
        else:
            predicted = canonicals[0]
        correct = predicted is not None and answers_equal(predicted, q.gold, ds.schema)
        if correct:
            n_correct += 1
        outcomes.append(QuestionOutcome(q.id, predicted, correct, tie=tie))

    accuracy = n_correct / len(ds.questions) if ds.questions else 0.0
    return EvalReport(
        dataset=ds.name,
        method=method,
        m=n,
        temperature=t,
        accuracy=accuracy,
        per_question=tuple(outcomes),
    )


def sweep(
    ds: Dataset,
    template: PromptTemplate,
    backend: Backend,
    axis: str,
    values: Sequence,
    *,
    method: EvalMethod = EvalMethod.SELF_CONSISTENCY,
    m: int = 32,
    temperature: float = 0.7,
    **eval_kwargs,
) -> list[EvalReport]:
    """One evaluation per value along ``temperature`` or ``n_paths``."""
    if axis not in ("temperature", "n_paths"):
        raise ValueError("axis must be 'temperature' or 'n_paths'")
    if not values:
        raise ValueError("values must be non-empty")
    reports = []
    for value in values:
        if axis == "temperature":
            reports.append(evaluate(ds, template, backend, method, m, float(value), **eval_kwargs))
        else:
            reports.append(evaluate(ds, template, backend, method, int(value), temperature, **eval_kwargs))
    return reports


def format_eval_table(reports: Sequence[EvalReport]) -> str:
    """Method-by-dataset accuracy grid, one row per (method, m, T) setting."""
    datasets = sorted({r.dataset for r in reports})
    rows: dict[tuple, dict[str, float]] = {}
    for r in reports:
        rows.setdefault((r.method.value, r.m, r.temperature), {})[r.dataset] = r.accuracy
    header = f"{'method':<18} {'m':>4} {'T':>5}  " + "  ".join(f"{d:>12}" for d in datasets)
    lines = [header, "-" * len(header)]
    for (method, m, temperature), cells in rows.items():
        cols = "  ".join(
            f"{cells[d] * 100:>11.1f}%" if d in cells else f"{'-':>12}" for d in datasets
        )
        lines.append(f"{method:<18} {m:>4} {temperature:>5.2f}  {cols}")
    return "\n".join(lines)


def write_eval_report(report: EvalReport, path: str | Path) -> None:
    """Structured-record report: a summary line then one line per question."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(
            json.dumps(
                {
                    "record": "summary",
                    "dataset": report.dataset,
                    "method": report.method.value,
                    "m": report.m,
                    "temperature": report.temperature,
                    "accuracy": report.accuracy,
                    "n_questions": len(report.per_question),
                }
            )
            + "\n"
        )
        for outcome in report.per_question:
            fh.write(
                json.dumps(
                    {
                        "record": "question",
                        "id": outcome.question_id,
                        "predicted": outcome.predicted,
                        "correct": outcome.correct,
                        "tie": outcome.tie,
                        "note": outcome.note,
                    }
                )
                + "\n"
            )
