"""Majority voting over extracted answers, supporting-path filtering, calibration.

The consensus answer is the most frequent extracted answer across a
question's sampled paths. Confidence divides the supporting-path count by the
total number of sampled paths (not just the ones that parsed), so questions
where most paths failed to produce an answer score low. Ties break toward the
answer whose first supporting path has the lowest index, and are flagged.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .backend import SampledPath
from .corpus import TaskSchema
from .extraction import answers_equal


@dataclass(frozen=True)
class ConsensusResult:
    question_id: str
    answer: str | None
    support_count: int
    total_paths: int
    extracted_paths: int
    confidence: float
    tie: bool


@dataclass(frozen=True)
class CalibrationBucket:
    confidence_lo: float
    confidence_hi: float
    n_questions: int
    accuracy: float


def vote(
    answers: Sequence[tuple[int, str | None]],
    m: int,
    schema: TaskSchema,
    question_id: str = "",
) -> ConsensusResult:
    """Majority-vote a question's (path_index, canonical-or-None) extractions."""
    if m < 1:
        raise ValueError("m must be >= 1")
    if len(answers) != m:
        raise ValueError(f"expected {m} answers, got {len(answers)}")

    # key, count, first supporting path index
    groups: list[list] = []
    extracted = 0
    for path_index, canonical in sorted(answers, key=lambda pair: pair[0]):
        if canonical is None:
            continue
        extracted += 1
        for group in groups:
            if answers_equal(group[0], canonical, schema):
                group[1] += 1
                break
        else:
            groups.append([canonical, 1, path_index])

    if not groups:
        return ConsensusResult(question_id, None, 0, m, 0, 0.0, False)

    best = max(group[1] for group in groups)
    tied = [group for group in groups if group[1] == best]
    winner = min(tied, key=lambda group: group[2])
    return ConsensusResult(
        question_id=question_id,
        answer=winner[0],
        support_count=best,
        total_paths=m,
        extracted_paths=extracted,
        confidence=best / m,
        tie=len(tied) > 1,
    )


def filter_supporting_paths(
    paths: Sequence[SampledPath],
    extractions: Sequence[str | None],
    consensus: ConsensusResult,
    schema: TaskSchema,
) -> list[SampledPath]:
    """Keep exactly the paths whose extraction equals the consensus answer."""
    if len(paths) != len(extractions):
        raise ValueError("paths and extractions must be parallel")
    if consensus.answer is None:
        return []
    return [
        path
        for path, canonical in zip(paths, extractions)
        if canonical is not None and answers_equal(canonical, consensus.answer, schema)
    ]


def calibration_histogram(
    results: Sequence[ConsensusResult],
    gold: Mapping[str, str],
    schema: TaskSchema,
    n_buckets: int = 10,
) -> list[CalibrationBucket]:
    """Equal-width confidence buckets with per-bucket consensus accuracy.

    Analysis-only: requires a gold answer for every result. Empty buckets
    report accuracy 0.0.
    """
    if n_buckets < 1:
        raise ValueError("n_buckets must be >= 1")
    counts = [0] * n_buckets
    correct = [0] * n_buckets
    for result in results:
        if result.question_id not in gold:
            raise ValueError(f"missing gold answer for question {result.question_id!r}")
        bucket = min(int(result.confidence * n_buckets), n_buckets - 1)
        counts[bucket] += 1
        if result.answer is not None and answers_equal(result.answer, gold[result.question_id], schema):
            correct[bucket] += 1
    return [
        CalibrationBucket(
            confidence_lo=i / n_buckets,
            confidence_hi=(i + 1) / n_buckets,
            n_questions=counts[i],
            accuracy=correct[i] / counts[i] if counts[i] else 0.0,
        )
        for i in range(n_buckets)
    ]


def format_calibration_table(buckets: Sequence[CalibrationBucket]) -> str:
    lines = [f"{'confidence':>14}  {'questions':>9}  {'accuracy':>8}"]
    for b in buckets:
        lines.append(f"[{b.confidence_lo:4.2f}, {b.confidence_hi:4.2f})  {b.n_questions:>9}  {b.accuracy:>8.3f}")
    return "\n".join(lines)


def write_calibration_report(
    buckets: Sequence[CalibrationBucket],
    records_path: str | Path,
    table_path: str | Path,
) -> None:
    with open(records_path, "w", encoding="utf-8") as fh:
        for b in buckets:
            fh.write(
                json.dumps(
                    {
                        "confidence_lo": b.confidence_lo,
                        "confidence_hi": b.confidence_hi,
                        "n_questions": b.n_questions,
                        "accuracy": b.accuracy,
                    }
                )
                + "\n"
            )
    Path(table_path).write_text(format_calibration_table(buckets) + "\n", encoding="utf-8")
