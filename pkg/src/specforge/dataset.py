"""Training-data rendering, export, and diversity statistics.

The two template strings below are the byte-pinned fine-tuning format; the
trainer's loss masking keys off the "### Response:" marker, so do not edit
them casually.
"""

from __future__ import annotations

import csv
import json
import logging
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from .errors import EmptyTrainingSetError
from .respond import SpecializationRecord
from .wordlists import COMMON_VERBS, STOPWORDS

log = logging.getLogger(__name__)

RESPONSE_MARKER = "### Response:"

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

_INPUT_MARKER = "\n\n### Input:\n"
_RESPONSE_MARKER_BLOCK = "\n\n### Response:\n"


@dataclass(frozen=True)
class TrainingExample:
    rendered_prompt: str
    target: str
    record_ref: int

    def full_text(self) -> str:
        return self.rendered_prompt + self.target

    def validate(self) -> None:
        if self.rendered_prompt.count(RESPONSE_MARKER) != 1:
            raise ValueError("rendered prompt must contain exactly one response marker")


def render_template(record: SpecializationRecord, record_ref: int = 0) -> TrainingExample:
    """Render one record into the pinned Alpaca-style training format."""
    if record.context:
        prompt = TEMPLATE_WITH_INPUT.format(instruction=record.instruction, input=record.context)
    else:
        prompt = TEMPLATE_NO_INPUT.format(instruction=record.instruction)
    example = TrainingExample(rendered_prompt=prompt, target=record.response, record_ref=record_ref)
    example.validate()
    return example


def parse_template(full_text: str) -> tuple[str, str, str]:
    """Invert render_template: recover (instruction, input, output).

    Splits on the first occurrence of each marker; fields that themselves
    contain the marker strings are unsupported.
    """
    head, sep, tail = full_text.partition("### Instruction:\n")
    if not sep:
        raise ValueError("not a rendered training example: missing instruction marker")
    body, sep, output = tail.partition(_RESPONSE_MARKER_BLOCK)
    if not sep:
        raise ValueError("not a rendered training example: missing response marker")
    instruction, sep, context = body.partition(_INPUT_MARKER)
    if not sep:
        context = ""
    return instruction, context, output


def _record_valid(record: SpecializationRecord) -> bool:
    return bool(record.accepted and record.instruction.strip() and record.response.strip())


def export_training_file(records: list[SpecializationRecord], path: str | Path) -> int:
    """Write {instruction, input, output} JSON-lines for the trainer.

    Records failing validity are skipped and logged; refuses to write an
    empty training set. Returns the number of lines written.
    """
    if not records:
        raise EmptyTrainingSetError("refusing to export an empty training set")
    path = Path(path)
    written = 0
    with path.open("w", encoding="utf-8") as fh:
        for i, record in enumerate(records):
            if not _record_valid(record):
                log.warning("export: skipping invalid record %d (%s)", i, record.reject_reason or "empty fields")
                continue
            obj = {
                "instruction": record.instruction,
                "input": record.context,
                "output": record.response,
            }
            fh.write(json.dumps(obj, ensure_ascii=False, sort_keys=True) + "\n")
            written += 1
    if written == 0:
        path.unlink()
        raise EmptyTrainingSetError("refusing to export an empty training set (all records invalid)")
    return written


def _simple_tokens(text: str) -> list[str]:
    out = []
    word = []
    for ch in text.lower():
        if ch.isalnum():
            word.append(ch)
        elif word:
            out.append("".join(word))
            word = []
    if word:
        out.append("".join(word))
    return out


def compute_stats(records: list[SpecializationRecord], top_n: int = 20) -> dict:
    """Instruction verb/object distribution plus context keyword frequencies.

    The first token found in the bundled verb list counts as the
    instruction's verb (bucket "other" when none matches); the object is the
    up-to-3 tokens that follow it. Verb-bucket counts sum to the number of
    instructions.
    """
    verb_counts: Counter[str] = Counter()
    pair_counts: Counter[tuple[str, str]] = Counter()
    keyword_counts: Counter[str] = Counter()
    for record in records:
        tokens = _simple_tokens(record.instruction)
        verb = None
        obj = ""
        for i, tok in enumerate(tokens):
            if tok in COMMON_VERBS:
                verb = tok
                obj = " ".join(tokens[i + 1 : i + 4])
                break
        if verb is None:
            verb = "other"
        verb_counts[verb] += 1
        pair_counts[(verb, obj)] += 1
        for tok in _simple_tokens(record.context):
            if tok not in STOPWORDS and not tok.isdigit():
                keyword_counts[tok] += 1
    return {
        "n_instructions": len(records),
        "verb_counts": dict(sorted(verb_counts.items(), key=lambda kv: (-kv[1], kv[0]))),
        "verb_object_pairs": [
            {"verb": v, "object": o, "count": c}
            for (v, o), c in sorted(pair_counts.items(), key=lambda kv: (-kv[1], kv[0]))[:top_n]
        ],
        "context_keywords": [
            {"token": t, "count": c}
            for t, c in sorted(keyword_counts.items(), key=lambda kv: (-kv[1], kv[0]))[:top_n]
        ],
    }


def write_stats(stats: dict, json_path: str | Path, csv_path: str | Path | None = None) -> None:
    Path(json_path).write_text(json.dumps(stats, ensure_ascii=False, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    if csv_path is not None:
        with Path(csv_path).open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["verb", "object", "count"])
            for row in stats["verb_object_pairs"]:
                writer.writerow([row["verb"], row["object"], row["count"]])
