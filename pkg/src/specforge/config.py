"""Run configuration: TOML file plus CLI-flag overrides (flags win).

Default values are the reference recipe and are snapshot-tested; change
them deliberately.
"""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError

# expected seed pool size for the reference biomedical setup (documentation
# default; the loader accepts any size)
EXPECTED_SEED_POOL_SIZE = 80

# fine-tuning recipe the exported data is meant for; the trainer package
# mirrors these in its own TrainSpec defaults
TRAIN_DEFAULTS = {
    "batch_size": 32,
    "learning_rate": 3e-4,
    "epochs": 3,
    "lora_rank": 8,
    "lora_alpha": 16,
}


@dataclass
class GenerationSection:
    target_count: int = 5000
    demos_per_prompt: int = 3
    temperature: float = 1.0
    top_p: float = 0.98
    max_tokens: int = 1024
    dedup_threshold: float = 0.7
    max_rounds: int = 0  # 0 = automatic budget


@dataclass
class RetrievalSection:
    k: int = 5
    k1: float = 1.2
    b: float = 0.75
    weight_scheme: str = "proportional"
    softmax_temperature: float = 1.0
    query_term_budget: int = 512
    doc_char_budget: int = 2000


@dataclass
class DecodeSection:
    max_steps: int = 256
    stop: list[str] = field(default_factory=lambda: ["\n"])
    workers: int = 1  # concurrent task decodes; >1 trades mock determinism for speed


@dataclass
class ContrastSection:
    alpha: float = 0.1
    mode: str = "log_ratio"


@dataclass
class EvalSection:
    k: int = 0
    tasks: str = ""
    max_tokens: int = 64


@dataclass
class RunConfig:
    domain: str = "biomedical"
    seed: int = 0
    out_dir: str = "runs/default"
    seeds_path: str = ""
    corpus_path: str = ""
    index_path: str = ""
    generator_backend: str = ""
    expert_backend: str = ""
    base_backend: str = ""
    generation: GenerationSection = field(default_factory=GenerationSection)
    retrieval: RetrievalSection = field(default_factory=RetrievalSection)
    decode: DecodeSection = field(default_factory=DecodeSection)
    contrast: ContrastSection = field(default_factory=ContrastSection)
    eval: EvalSection = field(default_factory=EvalSection)

    def config_hash(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()


_SECTION_TYPES = {
    "generation": GenerationSection,
    "retrieval": RetrievalSection,
    "decode": DecodeSection,
    "contrast": ContrastSection,
    "eval": EvalSection,
}

_RUN_KEYS = {
    "domain": "domain",
    "seed": "seed",
    "out_dir": "out_dir",
}

_PATH_KEYS = {
    "seeds": "seeds_path",
    "corpus": "corpus_path",
    "index": "index_path",
}

_BACKEND_KEYS = {
    "generator": "generator_backend",
    "expert": "expert_backend",
    "base": "base_backend",
}


def load_config(path: str | Path) -> RunConfig:
    """Parse a TOML run config; unknown keys are errors naming the field."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: invalid TOML: {exc}") from None

    cfg = RunConfig()
    for section, table in data.items():
        if section == "run":
            for key, value in table.items():
                if key not in _RUN_KEYS:
                    raise ConfigError(f"{path}: unknown key run.{key}")
                setattr(cfg, _RUN_KEYS[key], value)
        elif section == "paths":
            for key, value in table.items():
                if key not in _PATH_KEYS:
                    raise ConfigError(f"{path}: unknown key paths.{key}")
                setattr(cfg, _PATH_KEYS[key], str(value))
        elif section == "backend":
            for key, value in table.items():
                if key not in _BACKEND_KEYS:
                    raise ConfigError(f"{path}: unknown key backend.{key}")
                setattr(cfg, _BACKEND_KEYS[key], str(value))
        elif section in _SECTION_TYPES:
            target = getattr(cfg, section)
            valid = set(target.__dataclass_fields__)
            for key, value in table.items():
                if key not in valid:
                    raise ConfigError(f"{path}: unknown key {section}.{key}")
                setattr(target, key, value)
        else:
            raise ConfigError(f"{path}: unknown section [{section}]")

    # resolve relative paths against the config file's directory
    base = path.parent
    for attr in ("seeds_path", "corpus_path", "index_path"):
        value = getattr(cfg, attr)
        if value and not Path(value).is_absolute():
            setattr(cfg, attr, str(base / value))
    if cfg.eval.tasks and not Path(cfg.eval.tasks).is_absolute():
        cfg.eval.tasks = str(base / cfg.eval.tasks)
    if not Path(cfg.out_dir).is_absolute():
        cfg.out_dir = str(base / cfg.out_dir)
    for attr in ("generator_backend", "expert_backend", "base_backend"):
        value = getattr(cfg, attr)
        if value.startswith("mock:"):
            script = value[len("mock:"):]
            if not Path(script).is_absolute():
                setattr(cfg, attr, f"mock:{base / script}")
    return cfg


def validate_config(cfg: RunConfig, stage: str) -> list[str]:
    """Field-level diagnostics for the given stage; empty list means valid."""
    problems: list[str] = []

    def need_file(attr: str, label: str):
        value = getattr(cfg, attr)
        if not value:
            problems.append(f"{label}: required for stage but not set")
        elif not Path(value).exists():
            problems.append(f"{label}: path does not exist: {value}")

    if stage in ("index", "all"):
        need_file("corpus_path", "paths.corpus")
    if stage in ("generate", "all"):
        need_file("seeds_path", "paths.seeds")
        if not cfg.generator_backend:
            problems.append("backend.generator: required for stage but not set")
    if stage == "respond":
        if not cfg.generator_backend:
            problems.append("backend.generator: required for stage but not set")
    if stage == "iterate":
        if not cfg.expert_backend:
            problems.append("backend.expert: required for stage but not set")
        if not cfg.base_backend:
            problems.append("backend.base: required for stage but not set")
    if stage == "eval":
        if not cfg.eval.tasks:
            problems.append("eval.tasks: required for stage but not set")
        elif not Path(cfg.eval.tasks).exists():
            problems.append(f"eval.tasks: path does not exist: {cfg.eval.tasks}")
        if not cfg.generator_backend:
            problems.append("backend.generator: required for stage but not set")

    g = cfg.generation
    if g.target_count < 1:
        problems.append(f"generation.target_count: must be >= 1, got {g.target_count}")
    if g.demos_per_prompt < 1:
        problems.append(f"generation.demos_per_prompt: must be >= 1, got {g.demos_per_prompt}")
    if not (0 < g.dedup_threshold < 1):
        problems.append(f"generation.dedup_threshold: must be in (0, 1), got {g.dedup_threshold}")
    if g.temperature <= 0:
        problems.append(f"generation.temperature: must be > 0, got {g.temperature}")
    if not (0 < g.top_p <= 1):
        problems.append(f"generation.top_p: must be in (0, 1], got {g.top_p}")
    r = cfg.retrieval
    if r.k < 1:
        problems.append(f"retrieval.k: must be >= 1, got {r.k}")
    if r.weight_scheme not in ("proportional", "softmax"):
        problems.append(f"retrieval.weight_scheme: unknown scheme {r.weight_scheme!r}")
    if cfg.decode.max_steps < 1:
        problems.append(f"decode.max_steps: must be >= 1, got {cfg.decode.max_steps}")
    if cfg.decode.workers < 1:
        problems.append(f"decode.workers: must be >= 1, got {cfg.decode.workers}")
    c = cfg.contrast
    if not (0 < c.alpha < 1):
        problems.append(f"contrast.alpha: must be in (0, 1), got {c.alpha}")
    if c.mode not in ("log_ratio", "prob_diff"):
        problems.append(f"contrast.mode: unknown mode {c.mode!r}")
    if cfg.eval.k < 0:
        problems.append(f"eval.k: must be >= 0, got {cfg.eval.k}")
    return problems
