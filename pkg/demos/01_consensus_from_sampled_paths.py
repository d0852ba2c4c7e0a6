"""Walkthrough: sample multiple reasoning paths, vote, keep the supporters.

Three scripted completions for one money question disagree (108, 96, 108).
Majority voting picks 108 with confidence 2/3, and only the two supporting
paths survive as self-training material. Runs fully offline on the mock
backend.

Run:
    python demos/01_consensus_from_sampled_paths.py
"""

from selfcot import (
    CompletionRequest,
    MockBackend,
    SampledPath,
    TaskSchema,
    extract_answer,
    filter_supporting_paths,
    vote,
)

QUESTION = (
    "Stefan goes to a restaurant with his family. They order an appetizer that costs $10 and "
    "4 entrees that are $20 each. If they tip 20% of the total, what is the total amount of "
    "money that they spend?"
)
OUTPUTS = [
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

schema = TaskSchema.numeric()

# The mock backend maps a prompt to its scripted sample list, so "sampling"
# three paths is just a completion request with n_samples=3.
backend = MockBackend.from_prompts({QUESTION: OUTPUTS})
texts = backend.complete(CompletionRequest(prompt=QUESTION, temperature=0.7, n_samples=3))

paths = [SampledPath("stefan", i, t, temperature=0.7, backend_id=backend.backend_id) for i, t in enumerate(texts)]

print("extracted answers per path:")
extractions = []
for path in paths:
    got = extract_answer(path.text, schema)
    extractions.append(got.canonical if got else None)
    print(f"  path {path.path_index}: {extractions[-1]!r}")

consensus = vote(list(enumerate(extractions)), m=3, schema=schema, question_id="stefan")
print(f"\nconsensus answer : {consensus.answer}")
print(f"support          : {consensus.support_count} of {consensus.total_paths} paths")
print(f"confidence       : {consensus.confidence:.3f}")
print(f"tie              : {consensus.tie}")

kept = filter_supporting_paths(paths, extractions, consensus, schema)
print(f"\nretained paths for self-training: {[p.path_index for p in kept]}")
print("the derailed path (96) is dropped and never becomes training data")
