"""Command-line front end.

Subcommands: generate, eval, sweep, gen-questions, gen-prompts, calibrate,
export-manifest. Every subcommand accepts ``--config FILE`` (JSON) with flag
overrides on top, and ``--dry-run`` to print the planned backend request
count without issuing any calls. Exit codes: 0 ok, 2 config error, 3 backend
exhaustion.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .backend import Backend, CachingBackend, FixtureMissError, HTTPBackend, MockBackend, TransportError
from .consensus import calibration_histogram, format_calibration_table, vote, write_calibration_report
from .corpus import CorpusError, load_dataset, sample_subset
from .evalharness import EvalMethod, evaluate, format_eval_table, sweep, write_eval_report
from .extraction import extract_answer
from .backend import CompletionRequest, complete_batch
from .pipeline import (
    BackendOutageError,
    ConfigError,
    DatasetSpec,
    FinetuneManifest,
    RunConfig,
    RunPaths,
    _file_digest,
    planned_request_count,
    run_selfimprove,
)
from .prompting import PromptError, render_prompt
from .selfgen import (
    ExemplarShortfallError,
    generate_prompt_templates,
    generate_questions,
    save_generated_questions,
    save_template_set,
    screen_questions,
)

_SCHEMA_FLAGS = {"numeric": "numeric", "multiple-choice": "multiple_choice", "nli": "nli_label", "yes-no": "yes_no"}
_METHOD_FLAGS = {
    "standard": EvalMethod.STANDARD,
    "cot-greedy": EvalMethod.COT_GREEDY,
    "self-consistency": EvalMethod.SELF_CONSISTENCY,
}


def _add_backend_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--backend", choices=("mock", "http"), default=None, help="backend kind (default http)")
    p.add_argument("--fixture", default=None, help="mock fixture file (digest -> texts)")
    p.add_argument("--endpoint", default=None, help="HTTP completion endpoint URL")
    p.add_argument("--token-env", default=None, help="env var holding the bearer token")


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=None, help="JSON config file; flags override its keys")
    p.add_argument("--run-dir", default=None, help="run directory (default ./run)")
    p.add_argument("--dry-run", action="store_true", help="print planned request count and exit")
    _add_backend_flags(p)


def _add_dataset_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dataset", default=None, help="line-delimited dataset file")
    p.add_argument("--schema", choices=sorted(_SCHEMA_FLAGS), default=None)
    p.add_argument("--choices", type=int, default=None, help="label count for multiple-choice")
    p.add_argument("--name", default=None, help="dataset name (default: file stem)")
    p.add_argument("--bank", default=None, help="bundled prompt bank name (default: dataset name)")
    p.add_argument("--exemplar-file", default=None, help="exemplar JSONL overriding the bundled bank")
    p.add_argument("--subset", type=int, default=None, help="sample this many questions")
    p.add_argument("--subset-seed", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="selfcot", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="run the self-training pipeline and export training data")
    _add_common_flags(p)
    _add_dataset_flags(p)
    p.add_argument("--m", type=int, default=None, help="reasoning paths per question")
    p.add_argument("--temperature", type=float, default=None, help="sampling temperature")
    p.add_argument("--max-tokens", type=int, default=None)
    p.add_argument("--formats", default=None, help="comma-separated subset of 1,2,3,4")
    p.add_argument("--min-confidence", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--shuffle-exports", action="store_true", default=None)
    p.add_argument("--max-in-flight", type=int, default=None)
    p.add_argument("--preset", default=None, help="named hyperparameter preset (e.g. ul2)")
    p.add_argument("--no-resume", action="store_true", help="clear exports and checkpoints first")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("eval", help="evaluate a backend on a gold-bearing dataset")
    _add_common_flags(p)
    _add_dataset_flags(p)
    p.add_argument("--method", choices=sorted(_METHOD_FLAGS), required=True)
    p.add_argument("--m", type=int, default=None)
    p.add_argument("--temperature", type=float, default=None)
    p.add_argument("--max-tokens", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--max-in-flight", type=int, default=None)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("sweep", help="evaluate across temperatures or path counts")
    _add_common_flags(p)
    _add_dataset_flags(p)
    p.add_argument("--axis", choices=("temperature", "n-paths"), required=True)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--m", type=int, default=None)
    p.add_argument("--temperature", type=float, default=None)
    p.add_argument("--max-tokens", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--max-in-flight", type=int, default=None)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("gen-questions", help="self-generate new training questions from seeds")
    _add_common_flags(p)
    _add_dataset_flags(p)
    p.add_argument("--k-concat", type=int, default=None, help="seed questions per prompt (default 4)")
    p.add_argument("--n-target", type=int, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--temperature", type=float, default=None)
    p.add_argument("--max-tokens", type=int, default=None)
    p.add_argument("--screen", action="store_true", help="keep only confidently answerable questions")
    p.add_argument("--screen-m", type=int, default=None, help="paths per screening vote (default 32)")
    p.add_argument("--threshold", type=float, default=None, help="confidence threshold (default 0.6)")
    p.set_defaults(func=_cmd_gen_questions)

    p = sub.add_parser("gen-prompts", help="self-generate few-shot CoT prompt templates")
    _add_common_flags(p)
    _add_dataset_flags(p)
    p.add_argument("--shots", type=int, required=True, help="exemplars per template")
    p.add_argument("--templates", type=int, required=True, help="number of templates")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--max-tokens", type=int, default=None)
    p.set_defaults(func=_cmd_gen_prompts)

    p = sub.add_parser("calibrate", help="confidence vs accuracy analysis on a gold-bearing dataset")
    _add_common_flags(p)
    _add_dataset_flags(p)
    p.add_argument("--m", type=int, default=None)
    p.add_argument("--temperature", type=float, default=None)
    p.add_argument("--max-tokens", type=int, default=None)
    p.add_argument("--buckets", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--max-in-flight", type=int, default=None)
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("export-manifest", help="print the fine-tune manifest for a finished run")
    _add_common_flags(p)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--learning-rate", type=float, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.set_defaults(func=_cmd_export_manifest)

    return parser


def cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (CorpusError, PromptError, FileNotFoundError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except BackendOutageError as exc:
        print(f"backend exhausted: {exc}", file=sys.stderr)
        return 3
    except (TransportError, FixtureMissError) as exc:
        print(f"backend exhausted: {exc}", file=sys.stderr)
        return 3
    except ExemplarShortfallError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli(sys.argv[1:]))


def _load_config_file(args) -> dict:
    if not args.config:
        return {}
    with open(args.config, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ConfigError("config", "config file must hold a JSON object")
    return data


def _pick(flag_value, config: dict, key: str, default):
    if flag_value is not None:
        return flag_value
    return config.get(key, default)


def _run_dir(args, config) -> Path:
    return Path(_pick(args.run_dir, config, "run_dir", "run"))


def _make_backend(args, config: dict) -> Backend:
    kind = _pick(args.backend, config, "backend", "http")
    if kind == "mock":
        fixture = _pick(args.fixture, config, "fixture", None)
        if not fixture:
            raise ConfigError("fixture", "mock backend needs --fixture")
        return MockBackend.load_fixture(fixture)
    endpoint = _pick(args.endpoint, config, "endpoint", None)
    if not endpoint:
        raise ConfigError("endpoint", "http backend needs --endpoint")
    kwargs = {}
    token_env = _pick(args.token_env, config, "token_env", None)
    if token_env:
        kwargs["token_env"] = token_env
    return HTTPBackend(endpoint, **kwargs)


def _cached_backend(args, config) -> Backend:
    run_dir = _run_dir(args, config)
    return CachingBackend(_make_backend(args, config), run_dir / "cache")


def _dataset_spec(args, config: dict) -> DatasetSpec:
    if config.get("datasets"):
        if args.dataset:
            raise ConfigError("dataset", "use either --dataset or the config 'datasets' list")
        raise ConfigError("datasets", "multi-dataset configs are only supported by 'generate'")
    path = _pick(args.dataset, config, "dataset", None)
    if not path:
        raise ConfigError("dataset", "a dataset file is required")
    schema_flag = _pick(args.schema, config, "schema", None)
    if not schema_flag:
        raise ConfigError("schema", "a task schema is required")
    if schema_flag not in _SCHEMA_FLAGS:
        raise ConfigError("schema", f"unknown schema {schema_flag!r}; choose from {sorted(_SCHEMA_FLAGS)}")
    return DatasetSpec(
        path=path,
        schema_kind=_SCHEMA_FLAGS[schema_flag],
        n_choices=_pick(args.choices, config, "choices", 4),
        name=_pick(args.name, config, "name", ""),
        bank=_pick(args.bank, config, "bank", ""),
        exemplar_file=_pick(args.exemplar_file, config, "exemplar_file", ""),
        subset=_pick(args.subset, config, "subset", 0),
        subset_seed=_pick(args.subset_seed, config, "subset_seed", 0),
    )


def _load_spec_dataset(spec: DatasetSpec):
    ds = load_dataset(spec.path, spec.schema(), name=spec.resolved_name())
    if spec.subset:
        ds = sample_subset(ds, spec.subset, spec.subset_seed)
    return ds


def _cmd_generate(args) -> int:
    config = _load_config_file(args)
    data = {k: v for k, v in config.items() if k in RunConfig.__dataclass_fields__}
    if args.dataset or not data.get("datasets"):
        spec = _dataset_spec(args, {k: v for k, v in config.items() if k != "datasets"})
        data["datasets"] = [
            {
                "path": spec.path,
                "schema_kind": spec.schema_kind,
                "n_choices": spec.n_choices,
                "name": spec.name,
                "bank": spec.bank,
                "exemplar_file": spec.exemplar_file,
                "subset": spec.subset,
                "subset_seed": spec.subset_seed,
            }
        ]
    for flag, key in (
        (args.m, "m"),
        (args.temperature, "gen_temperature"),
        (args.max_tokens, "max_tokens"),
        (args.min_confidence, "min_confidence"),
        (args.seed, "seed"),
        (args.max_in_flight, "max_in_flight"),
        (args.preset, "preset"),
        (args.shuffle_exports, "shuffle_exports"),
    ):
        if flag is not None:
            data[key] = flag
    if args.formats is not None:
        try:
            data["formats"] = [int(f) for f in args.formats.split(",") if f.strip()]
        except ValueError:
            raise ConfigError("formats", f"cannot parse {args.formats!r}") from None
    cfg = RunConfig.from_dict(data)
    if args.dry_run:
        print(f"planned backend requests: {planned_request_count(cfg)} (each sampling m={cfg.m} paths)")
        return 0
    backend = _make_backend(args, config)
    result = run_selfimprove(cfg, backend, _run_dir(args, config), resume=not args.no_resume)
    mf = result.manifest
    print(f"export: {result.export_path}")
    print(
        f"questions={mf.questions} sampled={mf.paths_sampled} extracted={mf.paths_extracted} "
        f"retained={mf.paths_retained} examples={mf.examples_emitted} "
        f"cache_hit_rate={mf.cache_hit_rate:.2f}"
    )
    return 0


def _eval_template(spec: DatasetSpec, method: EvalMethod):
    templates = spec.templates()
    return templates.fewshot_standard if method is EvalMethod.STANDARD else templates.fewshot_cot


def _cmd_eval(args) -> int:
    config = _load_config_file(args)
    spec = _dataset_spec(args, config)
    method = _METHOD_FLAGS[args.method]
    m = _pick(args.m, config, "m", 32)
    temperature = _pick(args.temperature, config, "temperature", 0.7)
    ds = _load_spec_dataset(spec)
    if args.dry_run:
        print(f"planned backend requests: {len(ds)}")
        return 0
    backend = _cached_backend(args, config)
    report = evaluate(
        ds,
        _eval_template(spec, method),
        backend,
        method,
        m=m,
        temperature=temperature,
        max_tokens=_pick(args.max_tokens, config, "max_tokens", 256),
        seed=_pick(args.seed, config, "seed", 0),
        max_in_flight=_pick(args.max_in_flight, config, "max_in_flight", 8),
    )
    run_dir = _run_dir(args, config)
    RunPaths(run_dir).create()
    out = run_dir / "reports" / f"eval_{ds.name}_{method.value}.jsonl"
    write_eval_report(report, out)
    print(format_eval_table([report]))
    print(f"report: {out}")
    return 0


def _cmd_sweep(args) -> int:
    config = _load_config_file(args)
    spec = _dataset_spec(args, config)
    axis = "temperature" if args.axis == "temperature" else "n_paths"
    try:
        values = [v.strip() for v in args.values.split(",") if v.strip()]
        parsed = [float(v) if axis == "temperature" else int(v) for v in values]
    except ValueError:
        raise ConfigError("values", f"cannot parse {args.values!r}") from None
    if not parsed:
        raise ConfigError("values", "at least one value is required")
    ds = _load_spec_dataset(spec)
    if args.dry_run:
        print(f"planned backend requests: {len(ds) * len(parsed)}")
        return 0
    backend = _cached_backend(args, config)
    reports = sweep(
        ds,
        _eval_template(spec, EvalMethod.SELF_CONSISTENCY),
        backend,
        axis,
        parsed,
        m=_pick(args.m, config, "m", 32),
        temperature=_pick(args.temperature, config, "temperature", 0.7),
        max_tokens=_pick(args.max_tokens, config, "max_tokens", 256),
        seed=_pick(args.seed, config, "seed", 0),
        max_in_flight=_pick(args.max_in_flight, config, "max_in_flight", 8),
    )
    run_dir = _run_dir(args, config)
    RunPaths(run_dir).create()
    for value, report in zip(parsed, reports):
        out = run_dir / "reports" / f"sweep_{axis}_{value}.jsonl"
        write_eval_report(report, out)
    print(format_eval_table(reports))
    return 0


def _cmd_gen_questions(args) -> int:
    config = _load_config_file(args)
    spec = _dataset_spec(args, config)
    seeds = _load_spec_dataset(spec)
    n_target = args.n_target
    screen = args.screen or bool(config.get("screen"))
    if args.dry_run:
        planned = n_target + (n_target if screen else 0)
        print(f"planned backend requests: about {planned} (more if candidates repeat)")
        return 0
    backend = _cached_backend(args, config)
    candidates = generate_questions(
        list(seeds.questions),
        _pick(args.k_concat, config, "k_concat", 4),
        n_target,
        backend,
        _pick(args.seed, config, "seed", 0),
        temperature=_pick(args.temperature, config, "temperature", 0.7),
        max_tokens=_pick(args.max_tokens, config, "max_tokens", 256),
    )
    if screen:
        candidates = screen_questions(
            candidates,
            backend,
            _pick(args.screen_m, config, "screen_m", 32),
            _pick(args.threshold, config, "threshold", 0.6),
            template=_eval_template(spec, EvalMethod.SELF_CONSISTENCY),
            schema=spec.schema(),
            temperature=_pick(args.temperature, config, "temperature", 0.7),
            seed=_pick(args.seed, config, "seed", 0),
        )
    run_dir = _run_dir(args, config)
    RunPaths(run_dir).create()
    out = run_dir / "exports" / "generated_questions.jsonl"
    save_generated_questions(out, candidates)
    print(f"{len(candidates)} questions -> {out}")
    return 0


def _cmd_gen_prompts(args) -> int:
    config = _load_config_file(args)
    spec = _dataset_spec(args, config)
    questions = _load_spec_dataset(spec)
    if args.dry_run:
        print(f"planned backend requests: {len(questions)}")
        return 0
    backend = _cached_backend(args, config)
    template_set = generate_prompt_templates(
        list(questions.questions),
        backend,
        args.shots,
        args.templates,
        schema=spec.schema(),
        rng_seed=_pick(args.seed, config, "seed", 0),
        max_tokens=_pick(args.max_tokens, config, "max_tokens", 256),
    )
    run_dir = _run_dir(args, config)
    RunPaths(run_dir).create()
    out = run_dir / "exports" / "prompt_templates.jsonl"
    save_template_set(out, template_set)
    total = sum(len(t.exemplars) for t in template_set.templates)
    print(f"{len(template_set.templates)} templates x {template_set.shots_per_template} shots ({total} exemplars) -> {out}")
    return 0


def _cmd_calibrate(args) -> int:
    config = _load_config_file(args)
    spec = _dataset_spec(args, config)
    ds = _load_spec_dataset(spec)
    missing = [q.id for q in ds.questions if not q.has_gold()]
    if missing:
        raise ConfigError("dataset", f"calibration needs gold answers; missing for {missing[:5]}")
    if args.dry_run:
        print(f"planned backend requests: {len(ds)}")
        return 0
    backend = _cached_backend(args, config)
    m = _pick(args.m, config, "m", 32)
    template = _eval_template(spec, EvalMethod.SELF_CONSISTENCY)
    reqs = [
        CompletionRequest(
            prompt=render_prompt(template, q),
            temperature=_pick(args.temperature, config, "temperature", 0.7),
            max_tokens=_pick(args.max_tokens, config, "max_tokens", 256),
            n_samples=m,
            stop=("\nQ:",),
            seed=_pick(args.seed, config, "seed", 0),
        )
        for q in ds.questions
    ]
    results = complete_batch(backend, reqs, _pick(args.max_in_flight, config, "max_in_flight", 8))
    consensus_results = []
    for q, result in zip(ds.questions, results):
        if isinstance(result, Exception):
            raise BackendOutageError(q.id, result)
        canonicals = []
        for text in result:
            extracted = extract_answer(text, ds.schema)
            canonicals.append(extracted.canonical if extracted else None)
        consensus_results.append(vote(list(enumerate(canonicals)), m, ds.schema, question_id=q.id))
    gold = {q.id: q.gold for q in ds.questions}
    buckets = calibration_histogram(
        consensus_results, gold, ds.schema, n_buckets=_pick(args.buckets, config, "buckets", 10)
    )
    run_dir = _run_dir(args, config)
    RunPaths(run_dir).create()
    records = run_dir / "reports" / "calibration.jsonl"
    table = run_dir / "reports" / "calibration.txt"
    write_calibration_report(buckets, records, table)
    print(format_calibration_table(buckets))
    print(f"report: {records}")
    return 0


def _cmd_export_manifest(args) -> int:
    config = _load_config_file(args)
    run_dir = _run_dir(args, config)
    paths = RunPaths(run_dir)
    if paths.finetune.exists():
        data = json.loads(paths.finetune.read_text(encoding="utf-8"))
    elif paths.export.exists():
        data = FinetuneManifest("exports/training.jsonl", _file_digest(paths.export)).to_dict()
    else:
        raise ConfigError("run_dir", f"no finished run found under {run_dir}")
    if args.steps is not None:
        data["steps"] = args.steps
    if args.learning_rate is not None:
        data["learning_rate"] = args.learning_rate
    if args.batch_size is not None:
        data["batch_size"] = args.batch_size
    paths.manifests.mkdir(parents=True, exist_ok=True)
    paths.finetune.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(json.dumps(data, indent=2, sort_keys=True))
    return 0
