"""Walkthrough: is voting confidence honest about accuracy?

Builds a synthetic backend whose chance of a correct consensus equals the
confidence it reports (k supporting paths out of 32, correct with
probability k/32). A calibrated histogram should then track the diagonal:
bucket accuracy close to bucket midpoint, rising steadily. High-confidence
answers are usually right; the wrong ones cluster at low confidence, where
they contribute few, lightly-weighted training paths.

Run:
    python demos/06_calibration.py
"""

import random

from selfcot import CompletionRequest, MockBackend, TaskSchema, calibration_histogram, vote
from selfcot.consensus import format_calibration_table
from selfcot.extraction import extract_answer
from selfcot.prompting import PromptStyle, PromptTemplate, render_prompt

schema = TaskSchema.numeric()
zeroshot = PromptTemplate(PromptStyle.ZEROSHOT_COT)
m, n_questions = 32, 1200
rng = random.Random(2)

fixture, gold, prompts = {}, {}, []
for i in range(n_questions):
    text = f"synthetic question {i}?"
    truth, decoy = str(3 * i + 1), str(900_000 + i)
    support = rng.randint(1, m)
    answer = truth if rng.random() < support / m else decoy
    fixture[render_prompt(zeroshot, text)] = (
        [f"The answer is {answer}."] * support + ["I am stuck."] * (m - support)
    )
    gold[f"q{i}"] = truth
    prompts.append(text)

backend = MockBackend.from_prompts(fixture)
results = []
for i, text in enumerate(prompts):
    texts = backend.complete(CompletionRequest(prompt=render_prompt(zeroshot, text), temperature=0.7, n_samples=m))
    answers = []
    for t in texts:
        got = extract_answer(t, schema)
        answers.append(got.canonical if got else None)
    results.append(vote(list(enumerate(answers)), m, schema, question_id=f"q{i}"))

buckets = calibration_histogram(results, gold, schema, n_buckets=10)
print(format_calibration_table(buckets))
print("\naccuracy tracks the bucket midpoint: the vote's confidence is well calibrated")
