"""Single entrypoint wiring the pipeline stages into subcommands.

Stage order mirrors the pipeline overview: index -> generate -> respond ->
(iterate) -> export; `all` chains index/generate/respond/export. Every run
directory gets a manifest (config hash, output hashes, counts, timings)
used for resume/up-to-date detection.

Exit codes: 0 ok, 1 validation error, 2 runtime error, 3 partial with
warnings.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import sys
import time
from dataclasses import replace
from pathlib import Path

import click

from . import __version__, dataset, evaluate, generate
from .backend import SamplingParams, open_backend
from .config import RunConfig, load_config, validate_config
from .contrast import ContrastParams, generate_response_contrastive
from .errors import ConfigError, SpecforgeError
from .generate import GenerationConfig, load_tasks
from .index import build_index, load_index, read_corpus, save_index
from .respond import DecodeParams, generate_response, load_records
from .seeds import load_seeds

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
EXIT_PARTIAL = 3

ENV_BACKEND_URL = "SPECFORGE_BACKEND_URL"

STAGES = ("index", "generate", "respond", "iterate", "export", "stats", "eval", "all")
ALL_CHAIN = ("index", "generate", "respond", "export")


def _hash_file(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Manifest:
    """Per-run-directory record of completed stages and their output hashes."""

    def __init__(self, run_dir: Path, config_hash: str):
        self.path = run_dir / "manifest.json"
        self.data = {"config_hash": config_hash, "stages": {}}
        if self.path.exists():
            try:
                previous = json.loads(self.path.read_text(encoding="utf-8"))
            except json.JSONDecodeError:
                previous = None
            if previous and previous.get("config_hash") == config_hash:
                self.data = previous

    def up_to_date(self, stage: str) -> bool:
        entry = self.data["stages"].get(stage)
        if not entry or entry.get("status") != "done":
            return False
        for rel, digest in entry.get("outputs", {}).items():
            path = self.path.parent / rel
            if not path.exists() or _hash_file(path) != digest:
                return False
        return True

    def record(self, stage, status, outputs, counts, seconds, error=None):
        entry = {
            "status": status,
            "outputs": {p.name: _hash_file(p) for p in outputs if p.exists()},
            "counts": counts,
            "seconds": round(seconds, 3),
        }
        if error:
            entry["error"] = error
        self.data["stages"][stage] = entry
        self.save()

    def save(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text(json.dumps(self.data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _decode_params(cfg: RunConfig) -> DecodeParams:
    return DecodeParams(max_steps=cfg.decode.max_steps, stop_sequences=tuple(cfg.decode.stop))


def _gen_config(cfg: RunConfig) -> GenerationConfig:
    return GenerationConfig(
        target_count=cfg.generation.target_count,
        demos_per_prompt=cfg.generation.demos_per_prompt,
        sampling=SamplingParams(
            temperature=cfg.generation.temperature,
            top_p=cfg.generation.top_p,
            max_tokens=cfg.generation.max_tokens,
        ),
        dedup_threshold=cfg.generation.dedup_threshold,
        max_rounds=cfg.generation.max_rounds or None,
    )


def _index_path(cfg: RunConfig) -> Path:
    return Path(cfg.index_path) if cfg.index_path else Path(cfg.out_dir) / "index.bin"


def _stage_index(cfg: RunConfig) -> dict:
    out = _index_path(cfg)
    out.parent.mkdir(parents=True, exist_ok=True)
    index = build_index(read_corpus(cfg.corpus_path), k1=cfg.retrieval.k1, b=cfg.retrieval.b)
    save_index(index, out)
    click.echo(f"indexed {index.n_docs} documents -> {out}")
    return {"outputs": [out], "counts": {"documents": index.n_docs}}


def _stage_generate(cfg: RunConfig) -> dict:
    pool = load_seeds(cfg.seeds_path)
    backend = open_backend(cfg.generator_backend, role="base")
    out = Path(cfg.out_dir) / "tasks.jsonl"
    rng = random.Random(cfg.seed)
    result = generate.generate_instructions(
        pool, backend, _gen_config(cfg), rng, domain_name=cfg.domain, out_path=out
    )
    click.echo(f"accepted {len(result.tasks)} tasks in {result.rounds} rounds -> {out}")
    status = {"ok": "done", "budget_exhausted": "partial", "backend_error": "failed"}[result.status]
    return {
        "outputs": [out],
        "counts": {"tasks": len(result.tasks), "rounds": result.rounds},
        "status": status,
        "error": result.error,
    }


def _stage_respond(cfg: RunConfig) -> dict:
    tasks = load_tasks(Path(cfg.out_dir) / "tasks.jsonl")
    index = load_index(_index_path(cfg))
    backend = open_backend(cfg.generator_backend, role="base")
    out = Path(cfg.out_dir) / "records.jsonl"
    params = _decode_params(cfg)

    def decode_one(task):
        return generate_response(
            task,
            index,
            backend,
            k=cfg.retrieval.k,
            params=params,
            domain_name=cfg.domain,
            weight_scheme=cfg.retrieval.weight_scheme,
            softmax_temperature=cfg.retrieval.softmax_temperature,
            term_budget=cfg.retrieval.query_term_budget,
            doc_char_budget=cfg.retrieval.doc_char_budget,
        )

    if cfg.decode.workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=cfg.decode.workers) as pool:
            records = list(pool.map(decode_one, tasks))
    else:
        records = [decode_one(task) for task in tasks]

    written = rejected = 0
    with out.open("w", encoding="utf-8") as fh:
        for record in records:  # file order follows task order regardless of workers
            if not record.accepted:
                rejected += 1
                log.warning("rejected response for %r: %s", record.instruction[:60], record.reject_reason)
                continue
            fh.write(record.to_json() + "\n")
            written += 1
    click.echo(f"wrote {written} records ({rejected} rejected) -> {out}")
    return {"outputs": [out], "counts": {"records": written, "rejected": rejected}}


def _stage_iterate(cfg: RunConfig, tasks_source: str = "", with_retrieval: bool = False) -> dict:
    source = tasks_source or str(Path(cfg.out_dir) / "tasks.jsonl")
    if source == "fresh":
        pool = load_seeds(cfg.seeds_path)
        expert_gen = open_backend(cfg.expert_backend, role="aligned")
        fresh_path = Path(cfg.out_dir) / "tasks_iter2.jsonl"
        result = generate.generate_instructions(
            pool, expert_gen, _gen_config(cfg), random.Random(cfg.seed),
            domain_name=cfg.domain, out_path=fresh_path, iteration=2,
        )
        tasks = result.tasks
    else:
        tasks = load_tasks(source)
    expert = open_backend(cfg.expert_backend, role="aligned")
    base = open_backend(cfg.base_backend, role="base")
    contrast = ContrastParams(plausibility_alpha=cfg.contrast.alpha, mode=cfg.contrast.mode)
    index = load_index(_index_path(cfg)) if with_retrieval else None
    out = Path(cfg.out_dir) / "records_iter2.jsonl"
    params = _decode_params(cfg)
    written = rejected = 0
    with out.open("w", encoding="utf-8") as fh:
        for task in tasks:
            record = generate_response_contrastive(
                task, expert, base,
                decode=params,
                contrast=contrast,
                domain_name=cfg.domain,
                index=index,
                k=cfg.retrieval.k,
                iteration=2,
                doc_char_budget=cfg.retrieval.doc_char_budget,
            )
            if not record.accepted:
                rejected += 1
                continue
            fh.write(record.to_json() + "\n")
            written += 1
    click.echo(f"wrote {written} contrastive records ({rejected} rejected) -> {out}")
    return {"outputs": [out], "counts": {"records": written, "rejected": rejected}}


def _stage_export(cfg: RunConfig) -> dict:
    records = load_records(Path(cfg.out_dir) / "records.jsonl")
    out = Path(cfg.out_dir) / "train.jsonl"
    written = dataset.export_training_file(records, out)
    click.echo(f"exported {written} training examples -> {out}")
    return {"outputs": [out], "counts": {"examples": written, "skipped": len(records) - written}}


def _stage_stats(cfg: RunConfig) -> dict:
    records = load_records(Path(cfg.out_dir) / "records.jsonl")
    stats = dataset.compute_stats(records)
    json_out = Path(cfg.out_dir) / "stats.json"
    csv_out = Path(cfg.out_dir) / "stats.csv"
    dataset.write_stats(stats, json_out, csv_out)
    click.echo(f"stats over {stats['n_instructions']} instructions -> {json_out}")
    return {"outputs": [json_out, csv_out], "counts": {"instructions": stats["n_instructions"]}}


def _stage_eval(cfg: RunConfig) -> dict:
    tasks = evaluate.load_eval_tasks(cfg.eval.tasks)
    backend = open_backend(cfg.generator_backend, role="base")
    params = replace(evaluate.GREEDY_PARAMS, max_tokens=cfg.eval.max_tokens)
    report = evaluate.run_eval(tasks, backend, k=cfg.eval.k, params=params)
    out = Path(cfg.out_dir) / "report.json"
    out.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    click.echo(evaluate.render_table(report))
    click.echo(f"report -> {out}")
    return {
        "outputs": [out],
        "counts": {"tasks": len(report.tasks), "incomplete": len(report.incomplete_tasks)},
        "status": "done" if not report.incomplete_tasks else "partial",
    }


_STAGE_FNS = {
    "index": _stage_index,
    "generate": _stage_generate,
    "respond": _stage_respond,
    "iterate": _stage_iterate,
    "export": _stage_export,
    "stats": _stage_stats,
    "eval": _stage_eval,
}


def run_pipeline(cfg: RunConfig, stage: str, **stage_kwargs) -> int:
    """Execute one stage (or the `all` chain); returns the process exit code."""
    if stage not in STAGES:
        raise ConfigError(f"unknown stage {stage!r}")
    problems = validate_config(cfg, stage)
    if problems:
        for p in problems:
            click.echo(f"config error: {p}", err=True)
        return EXIT_VALIDATION

    run_dir = Path(cfg.out_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(run_dir, cfg.config_hash())

    chain = ALL_CHAIN if stage == "all" else (stage,)
    worst = EXIT_OK
    for name in chain:
        if stage == "all" and manifest.up_to_date(name):
            click.echo(f"{name}: up to date")
            continue
        start = time.monotonic()
        try:
            result = _STAGE_FNS[name](cfg, **(stage_kwargs if name == stage else {}))
        except (SpecforgeError, OSError) as exc:
            manifest.record(name, "failed", [], {}, time.monotonic() - start, error=str(exc))
            click.echo(f"{name} failed: {exc}", err=True)
            return EXIT_RUNTIME
        status = result.get("status", "done")
        manifest.record(
            name, status,
            result.get("outputs", []),
            result.get("counts", {}),
            time.monotonic() - start,
            error=result.get("error"),
        )
        if status == "failed":
            click.echo(f"{name} failed: {result.get('error')}", err=True)
            return EXIT_RUNTIME
        if status == "partial":
            worst = EXIT_PARTIAL
    return worst


# fixed run-directory filename per stage (the documented layout); --out on a
# subcommand copies the produced file to the requested path afterwards
STAGE_OUTPUT = {
    "generate": "tasks.jsonl",
    "respond": "records.jsonl",
    "iterate": "records_iter2.jsonl",
    "export": "train.jsonl",
    "stats": "stats.json",
    "eval": "report.json",
}


def _execute(stage: str, config_path, overrides, stage_kwargs=None, out_alias=None):
    """Build the config, apply flag overrides, run the stage, exit."""
    try:
        cfg = load_config(config_path) if config_path else RunConfig()
        overrides(cfg)
        if not cfg.generator_backend and os.environ.get(ENV_BACKEND_URL):
            cfg.generator_backend = os.environ[ENV_BACKEND_URL]
        code = run_pipeline(cfg, stage, **(stage_kwargs or {}))
        if out_alias and code in (EXIT_OK, EXIT_PARTIAL):
            produced = Path(cfg.out_dir) / STAGE_OUTPUT[stage]
            dest = Path(out_alias)
            if produced.exists() and dest.resolve() != produced.resolve():
                dest.parent.mkdir(parents=True, exist_ok=True)
                dest.write_bytes(produced.read_bytes())
                click.echo(f"copied -> {dest}")
        sys.exit(code)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_VALIDATION)
    except SpecforgeError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_RUNTIME)


def _common_options(fn):
    for option in reversed([
        click.option("--config", "config_path", type=click.Path(), default=None, help="TOML run config; flags override it."),
        click.option("--out-dir", type=click.Path(), default=None, help="Run directory for outputs and the manifest."),
        click.option("--seed", type=int, default=None, help="RNG seed override."),
        click.option("--domain", default=None, help="Domain name substituted into prompts."),
        click.option("--backend", "backend_spec", default=None,
                     help="Generator backend: http(s) URL or mock:<script>. Falls back to $SPECFORGE_BACKEND_URL."),
    ]):
        fn = option(fn)
    return fn


def _base_overrides(cfg, out_dir, seed, domain, backend_spec):
    if out_dir:
        cfg.out_dir = str(out_dir)
    if seed is not None:
        cfg.seed = seed
    if domain:
        cfg.domain = domain
    if backend_spec:
        cfg.generator_backend = backend_spec


@click.group()
@click.version_option(version=__version__, prog_name="specforge")
def main():
    """Self-specialization pipeline: generate domain instruction data from a
    few seeds, ground responses with BM25 retrieval, export training data,
    and evaluate k-shot performance."""
    logging.basicConfig(level=os.environ.get("SPECFORGE_LOG", "WARNING"))


@main.command("index")
@_common_options
@click.option("--corpus", type=click.Path(), default=None, help="Corpus file (JSONL {doc_id, text} or one doc per line).")
@click.option("--out", "index_out", type=click.Path(), default=None, help="Index output path.")
@click.option("--k1", type=float, default=None, help="BM25 k1.")
@click.option("--b", type=float, default=None, help="BM25 b.")
def cmd_index(config_path, out_dir, seed, domain, backend_spec, corpus, index_out, k1, b):
    """Build the BM25 index from a domain corpus."""

    def overrides(cfg):
        _base_overrides(cfg, out_dir, seed, domain, backend_spec)
        if corpus:
            cfg.corpus_path = corpus
        if index_out:
            cfg.index_path = index_out
        if k1 is not None:
            cfg.retrieval.k1 = k1
        if b is not None:
            cfg.retrieval.b = b

    _execute("index", config_path, overrides)


@main.command("generate")
@_common_options
@click.option("--seeds", type=click.Path(), default=None, help="Seed pool JSONL.")
@click.option("--target", type=int, default=None, help="Accepted-instruction target count.")
@click.option("--threshold", type=float, default=None, help="ROUGE-L dedup threshold.")
@click.option("--max-rounds", type=int, default=None, help="Hard round budget (0 = automatic).")
@click.option("--out", "out_alias", type=click.Path(), default=None, help="Also copy tasks.jsonl to this path.")
def cmd_generate(config_path, out_dir, seed, domain, backend_spec, seeds, target, threshold, max_rounds, out_alias):
    """Generate synthetic (instruction, input) tasks from the seed pool."""

    def overrides(cfg):
        _base_overrides(cfg, out_dir, seed, domain, backend_spec)
        if seeds:
            cfg.seeds_path = seeds
        if target is not None:
            cfg.generation.target_count = target
        if threshold is not None:
            cfg.generation.dedup_threshold = threshold
        if max_rounds is not None:
            cfg.generation.max_rounds = max_rounds

    _execute("generate", config_path, overrides, out_alias=out_alias)


@main.command("respond")
@_common_options
@click.option("--tasks", "tasks_path", type=click.Path(), default=None, help="Tasks JSONL (defaults to <out-dir>/tasks.jsonl).")
@click.option("--index", "index_in", type=click.Path(), default=None, help="Index file.")
@click.option("--k", type=int, default=None, help="Top-k documents to marginalize over.")
@click.option("--workers", type=int, default=None, help="Concurrent task decodes (default 1).")
@click.option("--out", "out_alias", type=click.Path(), default=None, help="Also copy records.jsonl to this path.")
def cmd_respond(config_path, out_dir, seed, domain, backend_spec, tasks_path, index_in, k, workers, out_alias):
    """Decode retrieval-grounded responses for generated tasks."""

    def overrides(cfg):
        _base_overrides(cfg, out_dir, seed, domain, backend_spec)
        if index_in:
            cfg.index_path = index_in
        if k is not None:
            cfg.retrieval.k = k
        if workers is not None:
            cfg.decode.workers = workers
        if tasks_path:
            src = Path(tasks_path)
            dst = Path(cfg.out_dir) / "tasks.jsonl"
            if not dst.exists() or src.resolve() != dst.resolve():
                dst.parent.mkdir(parents=True, exist_ok=True)
                dst.write_bytes(src.read_bytes())

    _execute("respond", config_path, overrides, out_alias=out_alias)


@main.command("iterate")
@_common_options
@click.option("--tasks", "tasks_source", default="", help="Tasks JSONL path, or 'fresh' to regenerate with the expert backend.")
@click.option("--expert", default=None, help="Expert (aligned) backend spec.")
@click.option("--base", "base_spec", default=None, help="Base (weaker) backend spec.")
@click.option("--mode", type=click.Choice(["log_ratio", "prob_diff"]), default=None, help="Contrast scoring mode.")
@click.option("--alpha", type=float, default=None, help="Plausibility alpha.")
@click.option("--with-retrieval", is_flag=True, default=False, help="Compose contrast with retrieval marginalization.")
@click.option("--out", "out_alias", type=click.Path(), default=None, help="Also copy records_iter2.jsonl to this path.")
def cmd_iterate(config_path, out_dir, seed, domain, backend_spec, tasks_source, expert, base_spec, mode, alpha, with_retrieval, out_alias):
    """Regenerate responses with expert-vs-base contrastive decoding."""

    def overrides(cfg):
        _base_overrides(cfg, out_dir, seed, domain, backend_spec)
        if expert:
            cfg.expert_backend = expert
        if base_spec:
            cfg.base_backend = base_spec
        if mode:
            cfg.contrast.mode = mode
        if alpha is not None:
            cfg.contrast.alpha = alpha

    _execute("iterate", config_path, overrides,
             {"tasks_source": tasks_source, "with_retrieval": with_retrieval},
             out_alias=out_alias)


@main.command("export")
@_common_options
@click.option("--out", "out_alias", type=click.Path(), default=None, help="Also copy train.jsonl to this path.")
def cmd_export(config_path, out_dir, seed, domain, backend_spec, out_alias):
    """Export accepted records as {instruction, input, output} JSONL."""

    def overrides(cfg):
        _base_overrides(cfg, out_dir, seed, domain, backend_spec)

    _execute("export", config_path, overrides, out_alias=out_alias)


@main.command("stats")
@_common_options
def cmd_stats(config_path, out_dir, seed, domain, backend_spec):
    """Emit instruction verb/object and context keyword statistics."""

    def overrides(cfg):
        _base_overrides(cfg, out_dir, seed, domain, backend_spec)

    _execute("stats", config_path, overrides)


@main.command("eval")
@_common_options
@click.option("--tasks", "tasks_path", type=click.Path(), default=None, help="Eval task file or directory of *.json.")
@click.option("--k", type=int, default=None, help="Demonstrations per prompt (0/1/5...).")
@click.option("--out", "out_alias", type=click.Path(), default=None, help="Also copy report.json to this path.")
def cmd_eval(config_path, out_dir, seed, domain, backend_spec, tasks_path, k, out_alias):
    """Run the k-shot evaluation harness."""

    def overrides(cfg):
        _base_overrides(cfg, out_dir, seed, domain, backend_spec)
        if tasks_path:
            cfg.eval.tasks = tasks_path
        if k is not None:
            cfg.eval.k = k

    _execute("eval", config_path, overrides, out_alias=out_alias)


@main.command("all")
@_common_options
def cmd_all(config_path, out_dir, seed, domain, backend_spec):
    """Run the full chain: index -> generate -> respond -> export."""

    def overrides(cfg):
        _base_overrides(cfg, out_dir, seed, domain, backend_spec)

    _execute("all", config_path, overrides)


if __name__ == "__main__":
    main()
