"""Question-only dataset loading, task schemas, and deterministic subsetting.

Datasets are line-delimited JSON files with fields ``{id, question, answer?,
partition?}``. Gold answers are canonicalized at load time and carried for
evaluation and calibration only: every read of :attr:`Question.gold` is
audited, and :func:`forbid_gold_reads` turns reads into hard errors so the
unsupervised training pipeline can prove it never consults labels.
"""

from __future__ import annotations

import json
import random
import threading
from contextlib import contextmanager
from dataclasses import dataclass
from enum import Enum
from pathlib import Path


class AnswerKind(str, Enum):
    NUMERIC = "numeric"
    MULTIPLE_CHOICE = "multiple_choice"
    NLI_LABEL = "nli_label"
    YES_NO = "yes_no"


NLI_LABELS = ("yes", "no", "it is not possible to tell")
YES_NO_LABELS = ("yes", "no")


class CorpusError(Exception):
    """Unreadable or inconsistent dataset file."""


class GoldReadError(RuntimeError):
    """A gold answer was read inside a label-free pipeline stage."""


@dataclass(frozen=True)
class TaskSchema:
    """Answer space of a task family: what counts as a canonical answer."""

    kind: AnswerKind
    label_set: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.kind is AnswerKind.NUMERIC:
            if self.label_set:
                raise ValueError("numeric schemas carry no label_set")
        elif self.kind is AnswerKind.MULTIPLE_CHOICE:
            expected = tuple(chr(ord("a") + i) for i in range(len(self.label_set)))
            if not self.label_set or self.label_set != expected:
                raise ValueError(
                    "multiple_choice label_set must be a contiguous letter "
                    f"range starting at 'a', got {self.label_set!r}"
                )
        elif self.kind is AnswerKind.NLI_LABEL:
            if self.label_set != NLI_LABELS:
                raise ValueError(f"nli_label label_set must be {NLI_LABELS!r}")
        elif self.kind is AnswerKind.YES_NO:
            if self.label_set != YES_NO_LABELS:
                raise ValueError(f"yes_no label_set must be {YES_NO_LABELS!r}")

    @classmethod
    def numeric(cls) -> "TaskSchema":
        return cls(AnswerKind.NUMERIC)

    @classmethod
    def multiple_choice(cls, n_choices: int) -> "TaskSchema":
        if not 2 <= n_choices <= 26:
            raise ValueError("n_choices must be in [2, 26]")
        return cls(AnswerKind.MULTIPLE_CHOICE, tuple(chr(ord("a") + i) for i in range(n_choices)))

    @classmethod
    def nli(cls) -> "TaskSchema":
        return cls(AnswerKind.NLI_LABEL, NLI_LABELS)

    @classmethod
    def yes_no(cls) -> "TaskSchema":
        return cls(AnswerKind.YES_NO, YES_NO_LABELS)


# Gold-read audit. Process-wide: the pipeline flips the flag around its
# label-free stages; evaluation code reads gold with the flag down.
_audit_lock = threading.Lock()
_gold_reads = 0
_gold_forbidden = False


def gold_read_count() -> int:
    """Total number of Question.gold reads since process start."""
    return _gold_reads


@contextmanager
def forbid_gold_reads():
    """Raise :class:`GoldReadError` on any Question.gold read inside the block."""
    global _gold_forbidden
    with _audit_lock:
        previous = _gold_forbidden
        _gold_forbidden = True
    try:
        yield
    finally:
        with _audit_lock:
            _gold_forbidden = previous


def _record_gold_read(question_id: str) -> None:
    global _gold_reads
    with _audit_lock:
        _gold_reads += 1
        if _gold_forbidden:
            raise GoldReadError(
                f"gold answer of question {question_id!r} was read inside a label-free stage"
            )


class Question:
    """One task input, optionally carrying a canonical gold answer."""

    __slots__ = ("id", "text", "schema", "partition_tag", "_gold")

    def __init__(
        self,
        id: str,
        text: str,
        schema: TaskSchema,
        partition_tag: str | None = None,
        gold: str | None = None,
    ) -> None:
        if not text.strip():
            raise ValueError(f"question {id!r} has empty text")
        self.id = id
        self.text = text
        self.schema = schema
        self.partition_tag = partition_tag
        self._gold = gold

    @property
    def gold(self) -> str | None:
        """Canonical gold answer. Analysis-only; reads are audited."""
        _record_gold_read(self.id)
        return self._gold

    def has_gold(self) -> bool:
        """Presence check that does not count as a gold read."""
        return self._gold is not None

    def _key(self):
        return (self.id, self.text, self.schema, self.partition_tag, self._gold)

    def __eq__(self, other) -> bool:
        return isinstance(other, Question) and self._key() == other._key()

    def __hash__(self) -> int:
        return hash(self._key())

    def __repr__(self) -> str:
        return f"Question(id={self.id!r}, text={self.text[:40]!r}...)"


@dataclass(frozen=True)
class Dataset:
    name: str
    questions: tuple[Question, ...]
    schema: TaskSchema

    def __post_init__(self) -> None:
        ids = [q.id for q in self.questions]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise CorpusError(f"duplicate question ids in dataset {self.name!r}: {dupes}")

    def __len__(self) -> int:
        return len(self.questions)

    def __iter__(self):
        return iter(self.questions)


def load_dataset(path: str | Path, schema: TaskSchema, name: str | None = None) -> Dataset:
    """Load a line-delimited dataset file, canonicalizing gold answers.

    Records need a ``question`` field; ``id`` defaults to ``<name>-<line#>``.
    A gold ``answer`` that does not normalize under the schema is an error,
    as is a duplicated id or an unparseable line.
    """
    from .extraction import normalize  # deferred: extraction depends on schema types above

    path = Path(path)
    name = name or path.stem
    questions: list[Question] = []
    seen: set[str] = set()
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: malformed record: {exc}") from exc
            if not isinstance(record, dict) or not str(record.get("question", "")).strip():
                raise CorpusError(f"{path}:{lineno}: record needs a non-empty 'question' field")
            qid = str(record["id"]) if record.get("id") is not None else f"{name}-{lineno}"
            if qid in seen:
                raise CorpusError(f"{path}:{lineno}: duplicate id {qid!r}")
            seen.add(qid)
            gold = None
            if record.get("answer") is not None:
                raw = str(record["answer"])
                gold = normalize(raw, schema)
                if gold is None:
                    raise CorpusError(f"{path}: gold answer for id {qid!r} is not canonicalizable: {raw!r}")
            partition = str(record["partition"]) if record.get("partition") is not None else None
            questions.append(Question(qid, str(record["question"]), schema, partition, gold))
    return Dataset(name=name, questions=tuple(questions), schema=schema)


def sample_subset(ds: Dataset, n: int, seed: int) -> Dataset:
    """Pick ``n`` questions by a seeded permutation, keeping original order."""
    if n < 0:
        raise ValueError("n must be >= 0")
    if n >= len(ds.questions):
        return ds
    keep = sorted(random.Random(seed).sample(range(len(ds.questions)), n))
    return Dataset(ds.name, tuple(ds.questions[i] for i in keep), ds.schema)
