"""Shared fixtures: worked examples, scripted backends, file helpers."""

from __future__ import annotations

import json
import threading
from collections import Counter

from selfcot.backend import Backend, MockBackend
from selfcot.prompting import bank_templates, render_prompt

# A restaurant-bill question with three sampled reasoning paths; paths 1 and 3
# agree on 108, path 2 derails to 96. Used throughout as the canonical
# consensus fixture.
BILL_QUESTION = (
    "Stefan goes to a restaurant with his family. They order an appetizer that costs $10 and "
    "4 entrees that are $20 each. If they tip 20% of the total, what is the total amount of "
    "money that they spend?"
)
BILL_OUTPUTS = [
    "The appetizer costs $10. The entrees cost $20 each so in total 4 * $20 = $80. This means "
    "the total cost is $10 + $80 = $90. They tip 20% of it, so the total amount they spend is "
    "$90 * 1.2 = $108. The answer is 108.",
    "The appetizer costs $10 and the entrees are $20 each. There are 4 entrees so the sum is "
    "$20 * 4 = $80. The waiter gets 20% of the total. 20% of $80 is $80 * .2 = $16. The answer "
    "is $80 + $16 = $96.",
    "The appetizer costs $10. The entrees cost 4 * $20 = $80. The tip is 20% of the total, so "
    "it is 20% of the $90 they have spent. The tip is 0.2 * 90 = $18. The total they spent is "
    "$90 + $18 = $108. The answer is 108.",
]

# A midpoint-age question with one retained reasoning path, the standard
# augmentation fixture.
AGE_QUESTION = "Amy is 10 years old. Jake is 8 years old. Alex's age is right in the middle. How old is Alex?"
AGE_PATH = (
    "Amy is 10 years old. Jake is 8 years old. Alex's age is in the middle of "
    "Amy and Jake, so Alex is ( 8 + 10 ) / 2 = 9 years old. The answer is 9."
)


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record) + "\n")
    return path


def oracle_vote(values):
    """Brute-force majority vote over canonical strings in path order.

    Returns (answer, support_count, tie). Independent of the consensus module.
    """
    counts = Counter(v for v in values if v is not None)
    if not counts:
        return None, 0, False
    best = max(counts.values())
    tied = [v for v, c in counts.items() if c == best]
    winner = min(tied, key=values.index)
    return winner, best, len(tied) > 1


class CountingBackend(Backend):
    """Pass-through wrapper that counts completion calls."""

    def __init__(self, inner: Backend):
        self.inner = inner
        self.backend_id = inner.backend_id
        self.calls = 0
        self._lock = threading.Lock()

    def complete(self, req):
        with self._lock:
            self.calls += 1
        return self.inner.complete(req)


def mock_for_pipeline(bank: str, question_to_texts: dict[str, list[str]]) -> MockBackend:
    """Mock keyed on the few-shot CoT prompts the pipeline will render."""
    templates = bank_templates(bank)
    return MockBackend.from_prompts(
        {render_prompt(templates.fewshot_cot, text): texts for text, texts in question_to_texts.items()}
    )
