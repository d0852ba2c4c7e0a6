"""Walkthrough: evaluating one backend under three prompting methods.

A scripted backend answers a 12-question set: greedy decoding gets 8 right,
while the multi-path profile rescues two of the misses by majority vote (the
wrong single-path answer is outvoted 3-to-2). Also sweeps the path count to
show how the report grid reads.

Run:
    python demos/04_eval_and_sweeps.py
"""

from selfcot import Dataset, EvalMethod, MockBackend, Question, TaskSchema, evaluate, format_eval_table, sweep
from selfcot.prompting import PromptStyle, PromptTemplate, render_prompt

schema = TaskSchema.numeric()
questions = tuple(
    Question(f"q{i}", f"What is {i} plus {i}?", schema, gold=str(2 * i)) for i in range(12)
)
ds = Dataset("toy_math", questions, schema)
zeroshot = PromptTemplate(PromptStyle.ZEROSHOT_COT)

fixture = {}
for i, q in enumerate(ds.questions):
    right = f"The answer is {2 * i}."
    wrong = f"The answer is {2 * i + 1}."
    if i < 8:
        profile = [right] * 5                      # solid questions
    elif i < 10:
        profile = [wrong, right, right, wrong, right]  # greedy path wrong, vote recovers
    else:
        profile = [wrong] * 5                      # hopeless questions
    fixture[render_prompt(zeroshot, q)] = profile
backend = MockBackend.from_prompts(fixture)

greedy = evaluate(ds, zeroshot, backend, EvalMethod.COT_GREEDY)
voted = evaluate(ds, zeroshot, backend, EvalMethod.SELF_CONSISTENCY, m=5, temperature=0.7)
print(format_eval_table([greedy, voted]))
print()
print(f"greedy accuracy          : {greedy.accuracy:.3f}   (first sampled path only)")
print(f"self-consistency accuracy: {voted.accuracy:.3f}   (majority over 5 paths)")

# sweeping the path count reuses the same samples via prefixes of the profile
reports = sweep(ds, zeroshot, backend, "n_paths", [1, 3, 5], temperature=0.7)
print()
print(format_eval_table(reports))
