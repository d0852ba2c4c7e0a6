"""Walkthrough: a full self-training run, then a free rerun from the cache.

Builds a five-question dataset on disk, scripts 32 samples per question on
the mock backend (most agreeing, a few derailing), and runs the whole
sample -> extract -> vote -> filter -> augment -> export flow into a run
directory. The second run finds every completion in the content-addressed
cache and issues zero backend calls.

Run:
    python demos/03_end_to_end_pipeline.py
"""

import json
import tempfile
from pathlib import Path

from selfcot import DatasetSpec, MockBackend, RunConfig, run_selfimprove
from selfcot.prompting import bank_templates, render_prompt

work = Path(tempfile.mkdtemp(prefix="selfcot-demo-"))
questions = {f"What is {i} plus {i}?": 2 * i for i in range(5)}

dataset = work / "toy_math.jsonl"
with dataset.open("w") as fh:
    for i, text in enumerate(questions):
        fh.write(json.dumps({"id": f"q{i}", "question": text}) + "\n")

# scripted sampling: 28 of 32 paths agree, 3 land on an off-by-one answer,
# one never states an answer sentence at all
templates = bank_templates("gsm8k")
fixture = {}
for text, answer in questions.items():
    paths = [f"Add the numbers. {text.rstrip('?')} makes {answer}. The answer is {answer}."] * 28
    paths += [f"Hmm. The answer is {answer + 1}."] * 3
    paths += ["This one stumps me."]
    fixture[render_prompt(templates.fewshot_cot, text)] = paths
backend = MockBackend.from_prompts(fixture)

cfg = RunConfig(
    datasets=(DatasetSpec(path=str(dataset), schema_kind="numeric", bank="gsm8k"),),
    m=32,
    gen_temperature=0.7,
)

run_dir = work / "run"
result = run_selfimprove(cfg, backend, run_dir)
mf = result.manifest
print(f"run directory      : {run_dir}")
print(f"questions          : {mf.questions}")
print(f"paths sampled      : {mf.paths_sampled}")
print(f"paths extracted    : {mf.paths_extracted}")
print(f"paths retained     : {mf.paths_retained}")
print(f"examples exported  : {mf.examples_emitted}  (retained x 4 formats)")
print(f"cache hits/misses  : {mf.cache_hits}/{mf.cache_misses}")

first = json.loads(result.export_path.read_text().splitlines()[0])
print("\nfirst export record:")
print(f"  question_id={first['question_id']} path_index={first['path_index']} "
      f"format_id={first['format_id']} confidence={first['confidence']:.3f}")
print(f"  output: {first['output'][:70]}...")

print("\nfine-tune manifest:", json.dumps(result.finetune.to_dict(), indent=2))

# rerun: the cache already holds every completion, so the backend is idle
rerun = run_selfimprove(cfg, backend, run_dir, resume=False)
print(f"\nrerun cache hits/misses: {rerun.manifest.cache_hits}/{rerun.manifest.cache_misses}"
      f"  (hit rate {rerun.manifest.cache_hit_rate:.0%})")
