"""End-to-end self-training runs: sample, extract, vote, filter, augment, export.

A run owns a directory::

    <run>/
      config.json        frozen config snapshot
      cache/             content-addressed completion cache
      exports/           training.jsonl (+ training_plain.jsonl)
      manifests/         manifest.json, runstats.json, finetune.json, checkpoint.jsonl
      reports/           evaluation and calibration output

Questions are processed in dataset order with bounded request parallelism;
the export writer is single-threaded, and a checkpoint line (with export file
offsets) lands after each question so an interrupted run resumes from the
last completed question with the export truncated to a clean boundary.
Volatile run statistics (wall clock, cache hit rate) are kept out of
``manifest.json`` so reruns of the same config are byte-identical.

Gold answers are never consulted: the whole processing loop runs under
:func:`selfcot.corpus.forbid_gold_reads`.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Sequence

from .backend import Backend, CachingBackend, CompletionRequest, SampledPath, complete_batch
from .consensus import filter_supporting_paths, vote
from .corpus import AnswerKind, Dataset, TaskSchema, forbid_gold_reads, load_dataset, sample_subset
from .extraction import extract_answer
from .prompting import FormatTemplates, augment_path, bank_templates, load_exemplar_file, render_prompt
from .selfgen import QUESTION_CUE

EXPORT_NAME = "training.jsonl"
PLAIN_EXPORT_NAME = "training_plain.jsonl"

PRESETS = {
    "default": {"m": 32, "gen_temperature": 0.7, "eval_temperature_post": 1.2},
    "ul2": {"m": 40, "gen_temperature": 0.5, "eval_temperature_post": 0.7},
}


class ConfigError(Exception):
    """A config field violates its contract."""

    def __init__(self, fieldname: str, message: str):
        super().__init__(f"{fieldname}: {message}")
        self.fieldname = fieldname


class BackendOutageError(Exception):
    """The backend failed mid-run; the run halted at a resumable checkpoint."""

    def __init__(self, question_id: str, cause: Exception):
        super().__init__(f"backend failed on question {question_id!r}: {cause}")
        self.question_id = question_id
        self.cause = cause


@dataclass(frozen=True)
class DatasetSpec:
    """One dataset entry of a run config."""

    path: str
    schema_kind: str
    n_choices: int = 4
    name: str = ""
    bank: str = ""
    exemplar_file: str = ""
    subset: int = 0
    subset_seed: int = 0

    def resolved_name(self) -> str:
        return self.name or Path(self.path).stem

    def schema(self) -> TaskSchema:
        kind = AnswerKind(self.schema_kind)
        if kind is AnswerKind.NUMERIC:
            return TaskSchema.numeric()
        if kind is AnswerKind.MULTIPLE_CHOICE:
            return TaskSchema.multiple_choice(self.n_choices)
        if kind is AnswerKind.NLI_LABEL:
            return TaskSchema.nli()
        return TaskSchema.yes_no()

    def templates(self) -> FormatTemplates:
        if self.exemplar_file:
            return FormatTemplates.from_cot_exemplars(load_exemplar_file(self.exemplar_file))
        return bank_templates(self.bank or self.resolved_name())


@dataclass(frozen=True)
class RunConfig:
    datasets: tuple[DatasetSpec, ...]
    m: int = 32
    gen_temperature: float = 0.7
    eval_temperature_post: float = 1.2
    max_tokens: int = 256
    formats: tuple[int, ...] = (1, 2, 3, 4)
    min_confidence: float = 0.0
    seed: int = 0
    shuffle_exports: bool = False
    max_in_flight: int = 8
    prompt_char_cap: int = 0
    preset: str = ""

    def validate(self) -> None:
        if not self.datasets:
            raise ConfigError("datasets", "at least one dataset is required")
        if self.m < 1:
            raise ConfigError("m", f"must be >= 1, got {self.m}")
        if not self.formats or any(f not in (1, 2, 3, 4) for f in self.formats):
            raise ConfigError("formats", f"must be a non-empty subset of {{1,2,3,4}}, got {self.formats}")
        if len(set(self.formats)) != len(self.formats):
            raise ConfigError("formats", "duplicate format ids")
        if self.gen_temperature <= 0:
            raise ConfigError("gen_temperature", "sampling temperature must be > 0")
        if self.eval_temperature_post <= 0:
            raise ConfigError("eval_temperature_post", "sampling temperature must be > 0")
        if self.max_tokens < 1:
            raise ConfigError("max_tokens", "must be >= 1")
        if not 0 <= self.min_confidence <= 1:
            raise ConfigError("min_confidence", "must be in [0, 1]")
        if self.max_in_flight < 1:
            raise ConfigError("max_in_flight", "must be >= 1")
        if self.prompt_char_cap < 0:
            raise ConfigError("prompt_char_cap", "must be >= 0 (0 disables the cap)")
        for spec in self.datasets:
            try:
                AnswerKind(spec.schema_kind)
            except ValueError:
                raise ConfigError("schema_kind", f"unknown kind {spec.schema_kind!r}") from None
            if spec.subset < 0:
                raise ConfigError("subset", "must be >= 0 (0 keeps the whole dataset)")

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        data = dict(data)
        preset_name = data.get("preset", "")
        if preset_name:
            if preset_name not in PRESETS:
                raise ConfigError("preset", f"unknown preset {preset_name!r}; known: {sorted(PRESETS)}")
            merged = dict(PRESETS[preset_name])
            merged.update(data)
            data = merged
        raw_specs = data.pop("datasets", ())
        specs = []
        for raw in raw_specs:
            if isinstance(raw, DatasetSpec):
                specs.append(raw)
            else:
                unknown = set(raw) - {f.name for f in fields(DatasetSpec)}
                if unknown:
                    raise ConfigError("datasets", f"unknown dataset fields {sorted(unknown)}")
                specs.append(DatasetSpec(**raw))
        known = {f.name for f in fields(cls)} - {"datasets"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown config field")
        if "formats" in data:
            data["formats"] = tuple(int(f) for f in data["formats"])
        cfg = cls(datasets=tuple(specs), **data)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        out = {
            "datasets": [
                {
                    "path": s.path,
                    "schema_kind": s.schema_kind,
                    "n_choices": s.n_choices,
                    "name": s.resolved_name(),
                    "bank": s.bank,
                    "exemplar_file": s.exemplar_file,
                    "subset": s.subset,
                    "subset_seed": s.subset_seed,
                }
                for s in self.datasets
            ],
            "m": self.m,
            "gen_temperature": self.gen_temperature,
            "eval_temperature_post": self.eval_temperature_post,
            "max_tokens": self.max_tokens,
            "formats": list(self.formats),
            "min_confidence": self.min_confidence,
            "seed": self.seed,
            "shuffle_exports": self.shuffle_exports,
            "max_in_flight": self.max_in_flight,
            "prompt_char_cap": self.prompt_char_cap,
            "preset": self.preset,
        }
        return out


@dataclass
class RunManifest:
    """Per-run accounting. Volatile fields go to runstats.json, the rest to manifest.json."""

    config: dict
    dataset_digest: str
    backend_id: str
    questions: int = 0
    paths_sampled: int = 0
    paths_extracted: int = 0
    paths_retained: int = 0
    examples_emitted: int = 0
    format_ratio: str = ""
    wall_clock_seconds: float = 0.0
    cache_hits: int = 0
    cache_misses: int = 0

    @property
    def cache_hit_rate(self) -> float:
        total = self.cache_hits + self.cache_misses
        return self.cache_hits / total if total else 0.0

    def deterministic_dict(self) -> dict:
        return {
            "config": self.config,
            "dataset_digest": self.dataset_digest,
            "backend_id": self.backend_id,
            "questions": self.questions,
            "paths_sampled": self.paths_sampled,
            "paths_extracted": self.paths_extracted,
            "paths_retained": self.paths_retained,
            "examples_emitted": self.examples_emitted,
            "format_ratio": self.format_ratio,
        }

    def runstats_dict(self) -> dict:
        return {
            "wall_clock_seconds": self.wall_clock_seconds,
            "cache_hits": self.cache_hits,
            "cache_misses": self.cache_misses,
            "cache_hit_rate": self.cache_hit_rate,
        }


@dataclass(frozen=True)
class FinetuneManifest:
    """Recommended fine-tuning settings for an exported dataset."""

    dataset_path: str
    dataset_digest: str
    steps: int = 10000
    learning_rate: float = 5e-5
    batch_size: int = 32

    def to_dict(self) -> dict:
        return {
            "dataset_path": self.dataset_path,
            "dataset_digest": self.dataset_digest,
            "steps": self.steps,
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
        }


@dataclass(frozen=True)
class SelfImproveResult:
    export_path: Path
    plain_export_path: Path
    manifest: RunManifest
    finetune: FinetuneManifest


class RunPaths:
    def __init__(self, run_dir: str | Path):
        self.root = Path(run_dir)
        self.cache = self.root / "cache"
        self.exports = self.root / "exports"
        self.manifests = self.root / "manifests"
        self.reports = self.root / "reports"
        self.config = self.root / "config.json"
        self.export = self.exports / EXPORT_NAME
        self.plain_export = self.exports / PLAIN_EXPORT_NAME
        self.checkpoint = self.manifests / "checkpoint.jsonl"
        self.manifest = self.manifests / "manifest.json"
        self.runstats = self.manifests / "runstats.json"
        self.finetune = self.manifests / "finetune.json"

    def create(self) -> None:
        for d in (self.root, self.cache, self.exports, self.manifests, self.reports):
            d.mkdir(parents=True, exist_ok=True)


def _file_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _combined_digest(paths: Sequence[Path]) -> str:
    h = hashlib.sha256()
    for p in paths:
        h.update(f"{p.name}:{_file_digest(p)}\n".encode("utf-8"))
    return h.hexdigest()


def _dump_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _load_checkpoint(path: Path) -> list[dict]:
    if not path.exists():
        return []
    lines = []
    with path.open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                lines.append(json.loads(line))
    return lines


def _shuffle_key(seed: int, line: str) -> str:
    return hashlib.sha256(f"{seed}:{line}".encode("utf-8")).hexdigest()


def load_run_datasets(cfg: RunConfig) -> list[tuple[DatasetSpec, Dataset]]:
    out = []
    for spec in cfg.datasets:
        ds = load_dataset(spec.path, spec.schema(), name=spec.resolved_name())
        if spec.subset:
            ds = sample_subset(ds, spec.subset, spec.subset_seed)
        out.append((spec, ds))
    return out


def planned_request_count(cfg: RunConfig) -> int:
    """Questions to sample, one request of m paths each (dry-run accounting)."""
    return sum(len(ds) for _, ds in load_run_datasets(cfg))


def run_selfimprove(
    cfg: RunConfig,
    backend: Backend,
    run_dir: str | Path,
    *,
    resume: bool = True,
) -> SelfImproveResult:
    """Execute the full sample-extract-vote-filter-augment-export flow.

    With ``resume`` (default) an interrupted run continues from the last
    completed question; otherwise exports and checkpoints are cleared first.
    The completion cache always survives, so reruns with the same config cost
    no backend calls.
    """
    cfg.validate()
    paths = RunPaths(run_dir)
    paths.create()

    snapshot = cfg.to_dict()
    if paths.config.exists():
        previous = json.loads(paths.config.read_text(encoding="utf-8"))
        if resume and previous != snapshot:
            raise ConfigError("config", "run directory was created with a different config; pass resume=False to restart")
    _dump_json(paths.config, snapshot)

    if not resume:
        for stale in (paths.export, paths.plain_export, paths.checkpoint, paths.manifest, paths.runstats, paths.finetune):
            if stale.exists():
                stale.unlink()

    started = time.monotonic()
    cached = CachingBackend(backend, paths.cache)
    loaded = load_run_datasets(cfg)
    templates = {spec.resolved_name(): spec.templates() for spec, _ in loaded}
    dataset_digest = _combined_digest([Path(spec.path) for spec, _ in loaded])

    manifest = RunManifest(
        config=snapshot,
        dataset_digest=dataset_digest,
        backend_id=cached.backend_id,
        format_ratio=":".join("1" for _ in cfg.formats),
    )

    checkpoint_rows = _load_checkpoint(paths.checkpoint) if resume else []
    completed = {row["question_id"] for row in checkpoint_rows}
    for row in checkpoint_rows:
        manifest.questions += 1
        manifest.paths_sampled += row["sampled"]
        manifest.paths_extracted += row["extracted"]
        manifest.paths_retained += row["retained"]
        manifest.examples_emitted += row["emitted"]
    # truncate exports to the last clean per-question boundary
    export_offset = checkpoint_rows[-1]["export_offset"] if checkpoint_rows else 0
    plain_offset = checkpoint_rows[-1]["plain_offset"] if checkpoint_rows else 0
    for p, offset in ((paths.export, export_offset), (paths.plain_export, plain_offset)):
        if p.exists():
            with p.open("r+", encoding="utf-8") as fh:
                fh.truncate(offset)
        elif offset:
            raise ConfigError("run_dir", f"checkpoint references a missing export file {p}")

    prompt_cap = cfg.prompt_char_cap or None
    chunk_size = max(cfg.max_in_flight * 4, 16)

    with paths.export.open("a", encoding="utf-8") as export_fh, paths.plain_export.open(
        "a", encoding="utf-8"
    ) as plain_fh, paths.checkpoint.open("a", encoding="utf-8") as ckpt_fh, forbid_gold_reads():
        for spec, ds in loaded:
            ds_name = spec.resolved_name()
            tpls = templates[ds_name]
            pending = [q for q in ds.questions if f"{ds_name}:{q.id}" not in completed]
            for chunk_start in range(0, len(pending), chunk_size):
                chunk = pending[chunk_start : chunk_start + chunk_size]
                reqs = [
                    CompletionRequest(
                        prompt=render_prompt(tpls.fewshot_cot, q, max_chars=prompt_cap),
                        temperature=cfg.gen_temperature,
                        max_tokens=cfg.max_tokens,
                        n_samples=cfg.m,
                        stop=("\n" + QUESTION_CUE,),
                        seed=cfg.seed,
                    )
                    for q in chunk
                ]
                results = complete_batch(cached, reqs, cfg.max_in_flight)
                for q, result in zip(chunk, results):
                    tagged_id = f"{ds_name}:{q.id}"
                    if isinstance(result, Exception):
                        for fh in (export_fh, plain_fh, ckpt_fh):
                            fh.flush()
                        raise BackendOutageError(tagged_id, result)
                    sampled = [
                        SampledPath(tagged_id, i, text, cfg.gen_temperature, cached.backend_id)
                        for i, text in enumerate(result)
                    ]
                    canonicals = []
                    for path in sampled:
                        extracted = extract_answer(path.text, ds.schema)
                        canonicals.append(extracted.canonical if extracted else None)
                    consensus = vote(
                        [(p.path_index, c) for p, c in zip(sampled, canonicals)],
                        cfg.m,
                        ds.schema,
                        question_id=tagged_id,
                    )
                    retained = []
                    if consensus.answer is not None and consensus.confidence >= cfg.min_confidence:
                        retained = filter_supporting_paths(sampled, canonicals, consensus, ds.schema)
                    emitted = 0
                    for path in retained:
                        for example in augment_path(q, path, consensus.answer, tpls):
                            if example.format_id not in cfg.formats:
                                continue
                            record = {
                                "input": example.input,
                                "output": example.output,
                                "format_id": example.format_id,
                                "question_id": example.question_id,
                                "path_index": example.path_index,
                                "confidence": consensus.confidence,
                            }
                            export_fh.write(json.dumps(record) + "\n")
                            plain_fh.write(json.dumps({"input": example.input, "output": example.output}) + "\n")
                            emitted += 1
                    export_fh.flush()
                    plain_fh.flush()
                    manifest.questions += 1
                    manifest.paths_sampled += len(sampled)
                    manifest.paths_extracted += sum(1 for c in canonicals if c is not None)
                    manifest.paths_retained += len(retained)
                    manifest.examples_emitted += emitted
                    ckpt_fh.write(
                        json.dumps(
                            {
                                "question_id": tagged_id,
                                "sampled": len(sampled),
                                "extracted": sum(1 for c in canonicals if c is not None),
                                "retained": len(retained),
                                "emitted": emitted,
                                "export_offset": export_fh.tell(),
                                "plain_offset": plain_fh.tell(),
                            }
                        )
                        + "\n"
                    )
                    ckpt_fh.flush()
                    completed.add(tagged_id)

    if cfg.shuffle_exports:
        _shuffle_export(paths, cfg.seed)

    manifest.wall_clock_seconds = time.monotonic() - started
    manifest.cache_hits = cached.hits
    manifest.cache_misses = cached.misses
    _dump_json(paths.manifest, manifest.deterministic_dict())
    _dump_json(paths.runstats, manifest.runstats_dict())

    # path kept relative to the run directory so manifests are relocatable
    finetune = FinetuneManifest(
        dataset_path=f"exports/{EXPORT_NAME}",
        dataset_digest=_file_digest(paths.export),
    )
    _dump_json(paths.finetune, finetune.to_dict())

    return SelfImproveResult(
        export_path=paths.export,
        plain_export_path=paths.plain_export,
        manifest=manifest,
        finetune=finetune,
    )


def _shuffle_export(paths: RunPaths, seed: int) -> None:
    """Reorder export lines by a keyed hash: a deterministic, idempotent shuffle."""
    lines = [l for l in paths.export.read_text(encoding="utf-8").splitlines() if l.strip()]
    lines.sort(key=lambda line: _shuffle_key(seed, line))
    with paths.export.open("w", encoding="utf-8") as fh:
        for line in lines:
            fh.write(line + "\n")
    with paths.plain_export.open("w", encoding="utf-8") as fh:
        for line in lines:
            record = json.loads(line)
            fh.write(json.dumps({"input": record["input"], "output": record["output"]}) + "\n")
