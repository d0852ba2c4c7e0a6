"""Answer parsing: locate the final "The answer is" clause and canonicalize it.

Generated text may quote earlier exemplars that themselves contain answer
sentences, so the *last* marker occurrence wins. The clause runs from the
marker to the end of its sentence, where a period between digits does not end
a sentence (so "9.5" survives). Numeric clauses may be arithmetic chains like
"$80 + $16 = $96"; the result is conventionally last, so the last decimal
literal in the clause is taken.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation

from .corpus import AnswerKind, TaskSchema

ANSWER_MARKER = "the answer is"

_NUMBER = re.compile(r"[-+]?(?:\d+\.?\d*|\.\d+)")
_COMMA_IN_NUMBER = re.compile(r"(?<=\d),(?=\d)")
_CURRENCY = re.compile(r"[$€£¥]")
_PAREN_LETTER = re.compile(r"\(([A-Za-z])\)")
_LONE_LETTER = re.compile(r"\b([A-Za-z])\b")
_WORD_YES = re.compile(r"\byes\b", re.IGNORECASE)
_WORD_NO = re.compile(r"\bno\b", re.IGNORECASE)
_NOT_POSSIBLE = "it is not possible to tell"


@dataclass(frozen=True)
class ExtractedAnswer:
    canonical: str
    raw_span: str
    schema_kind: AnswerKind


def _is_sentence_end(text: str, i: int) -> bool:
    ch = text[i]
    if ch in "\n!?":
        return True
    if ch == ".":
        nxt = text[i + 1] if i + 1 < len(text) else ""
        return not nxt.isdigit()  # a period followed by a digit is a decimal point
    return False


def _sentence_end(text: str, start: int) -> int:
    for i in range(start, len(text)):
        if _is_sentence_end(text, i):
            return i
    return len(text)


def _sentence_start(text: str, before: int) -> int:
    for i in range(before - 1, -1, -1):
        if _is_sentence_end(text, i):
            start = i + 1
            while start < before and text[start].isspace():
                start += 1
            return start
    return 0


def extract_answer(text: str, schema: TaskSchema) -> ExtractedAnswer | None:
    """Parse the final answer from generated text, or None when absent."""
    idx = text.lower().rfind(ANSWER_MARKER)
    if idx < 0:
        return None
    start = idx + len(ANSWER_MARKER)
    clause = text[start:_sentence_end(text, start)]
    canonical = normalize(clause, schema)
    if canonical is None:
        return None
    return ExtractedAnswer(canonical=canonical, raw_span=clause.strip(), schema_kind=schema.kind)


def final_answer_sentence(text: str) -> str | None:
    """The last "The answer is ..." sentence, from sentence start through its terminator."""
    idx = text.lower().rfind(ANSWER_MARKER)
    if idx < 0:
        return None
    start = _sentence_start(text, idx)
    end = _sentence_end(text, idx + len(ANSWER_MARKER))
    if end < len(text) and text[end] in ".!?":
        end += 1
    return text[start:end]


def truncate_after_answer(text: str) -> str | None:
    """Text cut just past the final answer sentence; None when no marker."""
    idx = text.lower().rfind(ANSWER_MARKER)
    if idx < 0:
        return None
    end = _sentence_end(text, idx + len(ANSWER_MARKER))
    if end < len(text) and text[end] in ".!?":
        end += 1
    return text[:end]


def normalize(raw: str, schema: TaskSchema) -> str | None:
    """Canonicalize a raw answer span under the schema, or None if impossible."""
    if schema.kind is AnswerKind.NUMERIC:
        return _normalize_numeric(raw)
    if schema.kind is AnswerKind.MULTIPLE_CHOICE:
        return _normalize_choice(raw, schema.label_set)
    if schema.kind is AnswerKind.NLI_LABEL:
        return _normalize_nli(raw)
    return _normalize_yes_no(raw)


def _normalize_numeric(raw: str) -> str | None:
    cleaned = _CURRENCY.sub("", _COMMA_IN_NUMBER.sub("", raw))
    literals = _NUMBER.findall(cleaned)
    if not literals:
        return None
    try:
        value = Decimal(literals[-1])
    except InvalidOperation:
        return None
    if value == 0:
        value = abs(value)  # avoid "-0"
    return format(value.normalize(), "f")


def _normalize_choice(raw: str, label_set: tuple[str, ...]) -> str | None:
    match = _PAREN_LETTER.search(raw) or _LONE_LETTER.search(raw)
    if not match:
        return None
    letter = match.group(1).lower()
    return letter if letter in label_set else None


def _normalize_nli(raw: str) -> str | None:
    if _NOT_POSSIBLE in raw.lower():
        return _NOT_POSSIBLE
    if _WORD_YES.search(raw):
        return "yes"
    if _WORD_NO.search(raw):
        return "no"
    return None


def _normalize_yes_no(raw: str) -> str | None:
    if _WORD_YES.search(raw):
        return "yes"
    if _WORD_NO.search(raw):
        return "no"
    return None


def answers_equal(a: str, b: str, schema: TaskSchema) -> bool:
    """Equality of canonical answers: exact decimal value for numeric, string otherwise."""
    if schema.kind is AnswerKind.NUMERIC:
        try:
            return Decimal(a) == Decimal(b)
        except InvalidOperation as exc:
            raise ValueError(f"answers_equal expects canonical numerics, got {a!r}, {b!r}") from exc
    return a == b
