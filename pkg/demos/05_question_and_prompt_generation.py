"""Walkthrough: the model grows its own questions and few-shot prompts.

Question generation concatenates random seed questions as "Q:" blocks and
keeps the continuation as a new candidate, then screens candidates by voting
confidence. Prompt generation answers questions zero-shot ("Let's think step
by step", greedy) and packs the parseable generations into disjoint few-shot
templates. Both run on scripted backends here.

Run:
    python demos/05_question_and_prompt_generation.py
"""

from selfcot import Question, TaskSchema, generate_prompt_templates, generate_questions, screen_questions
from selfcot.backend import Backend, MockBackend, prompt_digest
from selfcot.prompting import PromptStyle, PromptTemplate, render_prompt

schema = TaskSchema.numeric()
seeds = [Question(f"seed-{i}", f"What is {i} plus {2 * i}?", schema) for i in range(10)]


class ImaginativeBackend(Backend):
    """Scripted stand-in: invents a question derived from whatever prompt arrives."""

    backend_id = "imaginative"

    def complete(self, req):
        tag = int(prompt_digest(req.prompt)[:6], 16) % 9000
        return [f" A tank holds {tag} liters and loses half. How many liters remain?"] * req.n_samples


candidates = generate_questions(seeds, k_concat=4, n_target=6, backend=ImaginativeBackend(), rng_seed=7)
print(f"generated {len(candidates)} candidate questions:")
for cand in candidates:
    print(f"  - {cand.text[:70]}  (from seeds {', '.join(cand.source_seed_ids)})")

# screening: candidates must reach a confident consensus to survive;
# this scripted backend answers every candidate consistently 24 times out of 32
zeroshot = PromptTemplate(PromptStyle.ZEROSHOT_COT)
screen_fixture = {
    render_prompt(zeroshot, cand.text): ["The answer is 42."] * 24 + ["No idea."] * 8
    for cand in candidates
}
kept = screen_questions(
    candidates, MockBackend.from_prompts(screen_fixture), m=32, threshold=0.6,
    template=zeroshot, schema=schema,
)
print(f"\nscreening kept {len(kept)} of {len(candidates)} at threshold 0.6 "
      f"(each with confidence {kept[0].confidence:.3f})")

# prompt generation: greedy zero-shot answers become few-shot exemplars
questions = [Question(f"q{i}", f"What is {i} plus {i + 2}?", schema) for i in range(30)]
gen_fixture = {
    render_prompt(zeroshot, q): [f"Adding gives {2 * i + 2}. The answer is {2 * i + 2}."]
    for i, q in enumerate(questions)
}
template_set = generate_prompt_templates(
    questions, MockBackend.from_prompts(gen_fixture), shots_per_template=4, n_templates=5,
    schema=schema, rng_seed=0,
)
print(f"\nbuilt {template_set.n_templates} templates x {template_set.shots_per_template} shots")
first = template_set.templates[0].exemplars[0]
print(f"sample exemplar: Q: {first.question}")
print(f"                 A: {first.reasoning}")
