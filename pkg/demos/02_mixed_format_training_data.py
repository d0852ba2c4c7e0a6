"""Walkthrough: one retained reasoning path becomes four training examples.

Formats 1 and 2 prepend few-shot exemplars (with and without reasoning);
formats 3 and 4 are zero-shot. CoT formats train the full reasoning path as
the target, direct formats train only the answer sentence, so a fine-tuned
model learns both to reason and to answer tersely under either prompting
style.

Run:
    python demos/02_mixed_format_training_data.py
"""

from selfcot import Question, SampledPath, TaskSchema, augment_path, bank_templates

QUESTION = "Amy is 10 years old. Jake is 8 years old. Alex's age is right in the middle. How old is Alex?"
PATH = (
    "Amy is 10 years old. Jake is 8 years old. Alex's age is in the middle of "
    "Amy and Jake, so Alex is ( 8 + 10 ) / 2 = 9 years old. The answer is 9."
)

question = Question("amy-1", QUESTION, TaskSchema.numeric())
path = SampledPath("amy-1", 0, PATH, temperature=0.7, backend_id="demo")

# the bundled math bank supplies the few-shot exemplars; the direct-answer
# variant is derived from it by stripping reasoning down to the answer sentence
templates = bank_templates("gsm8k")

for example in augment_path(question, path, answer="9", templates=templates):
    print("=" * 72)
    print(f"FORMAT {example.format_id}")
    print("-- input " + "-" * 30)
    if example.format_id in (1, 2):
        head, tail = example.input.split("\n" + QUESTION, 1)
        print(f"[{head.count(chr(10)) // 2 + 1} exemplar blocks, {len(head)} chars]")
        print(QUESTION + tail)
    else:
        print(example.input)
    print("-- output " + "-" * 29)
    print(example.output)
