"""Adapter training loop.

Defaults mirror the reference recipe: batch 32, lr 3e-4, 3 epochs, rank 8,
alpha 16. The 4-bit quantization flag requires bitsandbytes and a CUDA
device; smoke/CI runs train unquantized on CPU.
"""

from __future__ import annotations

import json
import logging
import math
import random
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import torch

from .data import collate, encode_row, load_rows, validate_export
from .lora import adapter_parameters, adapter_state_dict, inject_adapters, save_adapter, update_norm

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)


class TrainError(Exception):
    pass


@dataclass
class TrainSpec:
    train_file: str = ""
    base_model: str = ""
    output_dir: str = "adapter_out"
    batch_size: int = 32
    learning_rate: float = 3e-4
    epochs: int = 3
    lora_rank: int = 8
    lora_alpha: float = 16
    quantize_4bit: bool = False
    max_steps: int = 0  # 0 = no cap; smoke mode sets 1
    max_seq_len: int = 512
    seed: int = 0

    def validate(self) -> None:
        problems = []
        if not self.train_file:
            problems.append("train_file is required")
        if not self.base_model:
            problems.append("base_model is required")
        if self.batch_size < 1:
            problems.append(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            problems.append(f"epochs must be >= 1, got {self.epochs}")
        if self.lora_rank < 1:
            problems.append(f"lora_rank must be >= 1, got {self.lora_rank}")
        if self.learning_rate <= 0:
            problems.append(f"learning_rate must be > 0, got {self.learning_rate}")
        if problems:
            raise TrainError("; ".join(problems))


def load_train_spec(path: str | Path) -> TrainSpec:
    path = Path(path)
    if not path.exists():
        raise TrainError(f"config file not found: {path}")
    data = tomllib.loads(path.read_text(encoding="utf-8"))
    table = data.get("train", data)
    spec = TrainSpec()
    valid = set(spec.__dataclass_fields__)
    for key, value in table.items():
        if key not in valid:
            raise TrainError(f"{path}: unknown key train.{key}")
        setattr(spec, key, value)
    # resolve paths relative to the config file
    for attr in ("train_file", "output_dir"):
        value = getattr(spec, attr)
        if value and not Path(value).is_absolute():
            setattr(spec, attr, str(path.parent / value))
    return spec


@dataclass
class TrainResult:
    adapter_dir: Path
    log_path: Path
    steps: int
    final_loss: float
    adapter_update_norm: float
    losses: list[float] = field(default_factory=list)


def _load_model_and_tokenizer(spec: TrainSpec):
    from transformers import AutoModelForCausalLM, AutoTokenizer

    if spec.quantize_4bit:
        try:
            import bitsandbytes  # noqa: F401
        except ImportError:
            raise TrainError(
                "quantize_4bit=true requires the bitsandbytes package (and a CUDA "
                "device); install it or set quantize_4bit=false"
            ) from None
        from transformers import BitsAndBytesConfig

        quant = BitsAndBytesConfig(load_in_4bit=True, bnb_4bit_compute_dtype=torch.float16)
        model = AutoModelForCausalLM.from_pretrained(spec.base_model, quantization_config=quant)
    else:
        model = AutoModelForCausalLM.from_pretrained(spec.base_model)
    tokenizer = AutoTokenizer.from_pretrained(spec.base_model)
    if tokenizer.pad_token_id is None:
        tokenizer.pad_token = tokenizer.eos_token
    return model, tokenizer


def train(spec: TrainSpec) -> TrainResult:
    """Fine-tune low-rank adapters on the exported data.

    Verifies the export schema before touching the model; writes the adapter
    weights plus a JSON log of per-step losses.
    """
    spec.validate()
    diagnostics = validate_export(spec.train_file)
    if diagnostics:
        preview = "; ".join(diagnostics[:5])
        raise TrainError(f"train file failed schema validation ({len(diagnostics)} problem(s)): {preview}")

    torch.manual_seed(spec.seed)
    random.seed(spec.seed)

    model, tokenizer = _load_model_and_tokenizer(spec)
    model.train()
    adapted = inject_adapters(model, spec.lora_rank, spec.lora_alpha)
    log.info("adapted %d modules", len(adapted))

    rows = load_rows(spec.train_file)
    encoded = [encode_row(row, tokenizer, spec.max_seq_len) for row in rows]
    optimizer = torch.optim.AdamW(adapter_parameters(model), lr=spec.learning_rate)

    initial_state = adapter_state_dict(model)
    losses: list[float] = []
    step = 0
    started = time.monotonic()
    try:
        done = False
        for epoch in range(spec.epochs):
            order = list(range(len(encoded)))
            random.Random(spec.seed + epoch).shuffle(order)
            for start in range(0, len(order), spec.batch_size):
                batch = [encoded[i] for i in order[start : start + spec.batch_size]]
                tensors = collate(batch, tokenizer.pad_token_id)
                out = model(**tensors)
                loss = out.loss
                loss_value = float(loss.detach())
                if not math.isfinite(loss_value):
                    raise TrainError(f"non-finite loss at step {step}: {loss_value}")
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                losses.append(loss_value)
                step += 1
                if spec.max_steps and step >= spec.max_steps:
                    done = True
                    break
            if done:
                break
    except torch.cuda.OutOfMemoryError as exc:
        raise TrainError(
            f"out of memory: reduce batch_size (currently {spec.batch_size}), "
            f"max_seq_len (currently {spec.max_seq_len}), or use a smaller base model"
        ) from exc
    except RuntimeError as exc:
        if "out of memory" in str(exc).lower():
            raise TrainError(
                f"out of memory: reduce batch_size (currently {spec.batch_size}), "
                f"max_seq_len (currently {spec.max_seq_len}), or use a smaller base model"
            ) from exc
        raise

    norm = update_norm(initial_state, adapter_state_dict(model))
    out_dir = Path(spec.output_dir)
    adapter_dir = save_adapter(
        model,
        out_dir / "adapter",
        {
            "base_model": spec.base_model,
            "lora_rank": spec.lora_rank,
            "lora_alpha": spec.lora_alpha,
            "adapted_modules": adapted,
        },
    )
    log_path = out_dir / "log.json"
    log_path.write_text(
        json.dumps(
            {
                "spec": asdict(spec),
                "steps": step,
                "losses": losses,
                "final_loss": losses[-1] if losses else None,
                "adapter_update_norm": norm,
                "seconds": round(time.monotonic() - started, 3),
                "n_examples": len(rows),
                "n_adapted_modules": len(adapted),
            },
            indent=2,
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )
    return TrainResult(
        adapter_dir=adapter_dir,
        log_path=log_path,
        steps=step,
        final_loss=losses[-1] if losses else float("nan"),
        adapter_update_norm=norm,
        losses=losses,
    )
