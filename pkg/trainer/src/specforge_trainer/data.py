"""Training-file validation, template rendering, and tokenization.

The two template strings are byte-pinned to the exporter's documented
format; the loss mask keys off the "### Response:" marker, so the prompt
part (everything up to and including the marker line) is excluded from the
loss.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import torch

REQUIRED_KEYS = ("instruction", "input", "output")

TEMPLATE_WITH_INPUT = (
    "Below is an instruction that describes a task, paired with an input that "
    "provides further context. Write a response that appropriately completes "
    "the request.\n\n"
    "### Instruction:\n{instruction}\n\n### Input:\n{input}\n\n### Response:\n"
)

TEMPLATE_NO_INPUT = (
    "Below is an instruction that describes a task. Write a response that "
    "appropriately completes the request.\n\n"
    "### Instruction:\n{instruction}\n\n### Response:\n"
)

IGNORE_INDEX = -100


def validate_export(train_file: str | Path) -> list[str]:
    """Check a training file against the export schema.

    Returns line-numbered diagnostics; an empty list means the file is
    consumable.
    """
    path = Path(train_file)
    if not path.exists():
        return [f"file not found: {path}"]
    diagnostics: list[str] = []
    n_rows = 0
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            n_rows += 1
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                diagnostics.append(f"line {lineno}: invalid JSON ({exc.msg})")
                continue
            if not isinstance(obj, dict):
                diagnostics.append(f"line {lineno}: expected a JSON object")
                continue
            for key in REQUIRED_KEYS:
                if key not in obj:
                    diagnostics.append(f"line {lineno}: missing field '{key}'")
                elif not isinstance(obj[key], str):
                    diagnostics.append(f"line {lineno}: field '{key}' must be a string")
            extra = set(obj) - set(REQUIRED_KEYS)
            if extra:
                diagnostics.append(f"line {lineno}: unexpected field(s) {sorted(extra)}")
            if isinstance(obj.get("instruction"), str) and not obj["instruction"].strip():
                diagnostics.append(f"line {lineno}: empty instruction")
            if isinstance(obj.get("output"), str) and not obj["output"].strip():
                diagnostics.append(f"line {lineno}: empty output")
    if n_rows == 0:
        diagnostics.append(f"file has no training rows: {path}")
    return diagnostics


def load_rows(train_file: str | Path) -> list[dict]:
    rows = []
    with Path(train_file).open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rows.append(json.loads(line))
    return rows


def render_row(row: dict) -> tuple[str, str]:
    """(prompt, target) for one export row."""
    if row["input"]:
        prompt = TEMPLATE_WITH_INPUT.format(instruction=row["instruction"], input=row["input"])
    else:
        prompt = TEMPLATE_NO_INPUT.format(instruction=row["instruction"])
    return prompt, row["output"]


@dataclass
class EncodedExample:
    input_ids: list[int]
    labels: list[int]


def encode_row(row: dict, tokenizer, max_seq_len: int) -> EncodedExample:
    """Tokenize prompt+target; labels mask the prompt part with -100."""
    prompt, target = render_row(row)
    prompt_ids = tokenizer(prompt, add_special_tokens=False)["input_ids"]
    target_ids = tokenizer(target, add_special_tokens=False)["input_ids"]
    if tokenizer.eos_token_id is not None:
        target_ids = target_ids + [tokenizer.eos_token_id]
    input_ids = (prompt_ids + target_ids)[:max_seq_len]
    n_prompt = min(len(prompt_ids), len(input_ids))
    labels = [IGNORE_INDEX] * n_prompt + input_ids[n_prompt:]
    return EncodedExample(input_ids=input_ids, labels=labels)


def collate(batch: list[EncodedExample], pad_token_id: int) -> dict[str, torch.Tensor]:
    width = max(len(ex.input_ids) for ex in batch)
    input_ids = torch.full((len(batch), width), pad_token_id, dtype=torch.long)
    labels = torch.full((len(batch), width), IGNORE_INDEX, dtype=torch.long)
    attention = torch.zeros((len(batch), width), dtype=torch.long)
    for i, ex in enumerate(batch):
        n = len(ex.input_ids)
        input_ids[i, :n] = torch.tensor(ex.input_ids, dtype=torch.long)
        labels[i, :n] = torch.tensor(ex.labels, dtype=torch.long)
        attention[i, :n] = 1
    return {"input_ids": input_ids, "labels": labels, "attention_mask": attention}
