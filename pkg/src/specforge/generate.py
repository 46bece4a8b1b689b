"""Instruction generation: prompt assembly, parsing of numbered
(instruction, input) blocks, ROUGE-L dedup filtering, and the accept-until-
target loop.

Parse grammar (fixed): blocks start at lines matching "N. Instruction:";
an optional "N. Input:" separates instruction from input; "<noinput>" or a
missing Input section means empty context. A trailing block without an
Input marker is treated as truncated by max_tokens and dropped; interior
blocks may omit it.
"""

from __future__ import annotations

import json
import logging
import math
import random
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

from .backend import SamplingParams
from .errors import BackendError, SpecforgeError
from .metrics import RougeSet, rouge_tokens
from .seeds import SeedExample, SeedPool, sample_demonstrations

log = logging.getLogger(__name__)

DEFAULT_TARGET_COUNT = 5000
DEFAULT_DEMOS_PER_PROMPT = 3
DEFAULT_DEDUP_THRESHOLD = 0.7
MIN_INSTRUCTION_TERMS = 3

NOINPUT_SENTINEL = "<noinput>"

PROMPT_HEADER = (
    "You are asked to come up with a set of 20 diverse task instructions about "
    "a {domain} domain. These task instructions will be given to a GPT model and "
    "we will evaluate the GPT model for completing the instructions.\n"
    "\n"
    "Here are the requirements:\n"
    "1. Try not to repeat the verb for each instruction to maximize diversity.\n"
    "2. The language used for the instruction also should be diverse. For "
    "example, you should combine questions with imperative instructions.\n"
    "3. The type of instructions should be diverse. The list should include "
    "diverse types of tasks like open-ended generation, classification, "
    "editing, etc.\n"
    "4. A GPT language model should be able to complete the instruction. For "
    "example, do not ask the assistant to create any visual or audio output. "
    "For another example, do not ask the assistant to wake you up at 5pm or "
    "set a reminder because it cannot perform any action.\n"
    "5. The instructions should be in English.\n"
    "6. The instructions should be 1 to 2 sentences long. Either an imperative "
    "sentence or a question is permitted.\n"
    "7. You should generate an appropriate input to the instruction. The input "
    "field should contain a specific example provided for the instruction. It "
    "should involve realistic data and should not contain simple placeholders. "
    "The input should provide substantial content to make the instruction "
    "challenging.\n"
    "8. Ensure diverse tasks are covered in the instructions and inputs, while "
    "focusing on a {domain} domain.\n"
    "\n"
    "List of 20 tasks:\n"
)

_BLOCK_START_RE = re.compile(r"^\s*(\d+)\s*\.\s*Instruction\s*:", re.MULTILINE)
_INPUT_RE = re.compile(r"^\s*(\d+)\s*\.\s*Input\s*:", re.MULTILINE)


@dataclass(frozen=True)
class GeneratedTask:
    instruction: str
    context: str = ""
    iteration: int = 1
    demo_seed_ids: tuple[int, ...] = ()
    accepted: bool = True

    def to_json(self) -> str:
        obj = {
            "instruction": self.instruction,
            "context": self.context,
            "iteration": self.iteration,
            "demo_seed_ids": list(self.demo_seed_ids),
            "accepted": self.accepted,
        }
        return json.dumps(obj, ensure_ascii=False, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "GeneratedTask":
        obj = json.loads(line)
        return cls(
            instruction=obj["instruction"],
            context=obj.get("context", ""),
            iteration=int(obj.get("iteration", 1)),
            demo_seed_ids=tuple(obj.get("demo_seed_ids", [])),
            accepted=bool(obj.get("accepted", True)),
        )


@dataclass(frozen=True)
class GenerationConfig:
    target_count: int = DEFAULT_TARGET_COUNT
    demos_per_prompt: int = DEFAULT_DEMOS_PER_PROMPT
    sampling: SamplingParams = field(default_factory=lambda: SamplingParams(temperature=1.0, top_p=0.98, max_tokens=1024))
    dedup_threshold: float = DEFAULT_DEDUP_THRESHOLD
    max_rounds: int | None = None  # None: auto budget from online yield estimate

    def __post_init__(self):
        if not (0 < self.dedup_threshold < 1):
            raise ValueError(f"dedup_threshold must be in (0, 1), got {self.dedup_threshold}")
        if self.target_count < 1:
            raise ValueError(f"target_count must be >= 1, got {self.target_count}")


def format_task_block(number: int, instruction: str, context: str) -> str:
    """One numbered demonstration block, exactly as the parser expects it."""
    return (
        f"{number}. Instruction: {instruction}\n"
        f"{number}. Input:\n{context if context else NOINPUT_SENTINEL}\n"
    )


def build_instruction_prompt(demos: list[SeedExample] | list[GeneratedTask], domain_name: str) -> str:
    """The full generation prompt: requirements header, numbered demos, and
    the next item number as a continuation cue."""
    if not demos:
        raise ValueError("need at least one demonstration")
    parts = [PROMPT_HEADER.format(domain=domain_name)]
    for i, demo in enumerate(demos, start=1):
        parts.append(format_task_block(i, demo.instruction, demo.context) + "\n")
    parts.append(f"{len(demos) + 1}. Instruction:")
    return "".join(parts)


def continuation_cue(n_demos: int) -> str:
    return f"{n_demos + 1}. Instruction:"


def parse_generated_tasks(raw: str) -> list[GeneratedTask]:
    """Extract (instruction, input) pairs from numbered-block text.

    Unparseable text yields an empty list; see the module docstring for the
    trailing-block truncation rule.
    """
    starts = list(_BLOCK_START_RE.finditer(raw))
    tasks: list[GeneratedTask] = []
    for i, start in enumerate(starts):
        end = starts[i + 1].start() if i + 1 < len(starts) else len(raw)
        body = raw[start.end() : end]
        input_match = _INPUT_RE.search(body)
        is_last = i + 1 == len(starts)
        if input_match is None:
            if is_last:
                # no Input marker and nothing after it: assume truncation
                continue
            instruction, context = body.strip(), ""
        else:
            instruction = body[: input_match.start()].strip()
            context = body[input_match.end() :].strip()
            if context.lower() == NOINPUT_SENTINEL:
                context = ""
        if not instruction:
            continue
        tasks.append(GeneratedTask(instruction=instruction, context=context))
    if raw.strip() and not tasks:
        log.debug("parse_generated_tasks: nothing parseable in %r", raw[:120])
    return tasks


def filter_tasks(
    candidates: list[GeneratedTask],
    existing: list[GeneratedTask | SeedExample],
    threshold: float,
    rouge_set: RougeSet | None = None,
) -> list[GeneratedTask]:
    """Keep candidates whose instruction stays below the ROUGE-L threshold
    against every existing instruction (seeds included) and every candidate
    accepted earlier in this batch. Instructions under 3 terms are dropped.

    Passing a RougeSet preloaded with `existing` lets the caller reuse the
    interned state across rounds; it is mutated as candidates are accepted.
    """
    if not (0 < threshold < 1):
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")
    if rouge_set is None:
        rouge_set = RougeSet()
        for item in existing:
            rouge_set.add(item.instruction)
    accepted: list[GeneratedTask] = []
    for cand in candidates:
        if len(rouge_tokens(cand.instruction)) < MIN_INSTRUCTION_TERMS:
            continue
        if rouge_set.max_score(cand.instruction) >= threshold:
            continue
        accepted.append(cand)
        rouge_set.add(cand.instruction)
    return accepted


@dataclass
class GenerationResult:
    tasks: list[GeneratedTask]
    status: str  # ok | budget_exhausted | backend_error
    rounds: int
    error: str | None = None


def _auto_budget(target: int, accepted: int, rounds: int) -> int:
    """Round budget from the online yield estimate: 10x the rounds a run at
    the observed per-round yield would need (yield floored at 1)."""
    mean_yield = (accepted / rounds) if rounds else 1.0
    return max(1, math.ceil(10 * target / max(mean_yield, 1.0)))


def load_tasks(path: str | Path) -> list[GeneratedTask]:
    path = Path(path)
    if not path.exists():
        raise SpecforgeError(f"tasks file not found: {path} (run the generate stage first)")
    tasks = []
    with path.open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                tasks.append(GeneratedTask.from_json(line))
    return tasks


def generate_instructions(
    pool: SeedPool,
    backend,
    config: GenerationConfig,
    rng: random.Random,
    domain_name: str = "biomedical",
    out_path: str | Path | None = None,
    iteration: int = 1,
) -> GenerationResult:
    """Sample demos, prompt, parse, and dedup-filter until target_count
    instructions are accepted or the round budget runs out.

    Accepted tasks are appended to out_path (JSON-lines) as they arrive, so
    an aborted run keeps its partial results and a rerun resumes from them.
    """
    if len(pool) == 0:
        raise ValueError("seed pool is empty")

    accepted: list[GeneratedTask] = []
    rouge_set = RougeSet()
    for seed in pool:
        rouge_set.add(seed.instruction)

    out_file = None
    if out_path is not None:
        out_path = Path(out_path)
        if out_path.exists():
            for task in load_tasks(out_path):
                accepted.append(task)
                rouge_set.add(task.instruction)
        out_file = out_path.open("a", encoding="utf-8")

    def persist(tasks: list[GeneratedTask]) -> None:
        if out_file is not None:
            for t in tasks:
                out_file.write(t.to_json() + "\n")
            out_file.flush()

    rounds = 0
    status = "ok"
    error = None
    try:
        while len(accepted) < config.target_count:
            budget = config.max_rounds if config.max_rounds is not None else _auto_budget(
                config.target_count, len(accepted), rounds
            )
            if rounds >= budget:
                status = "budget_exhausted"
                log.warning(
                    "generation stopped after %d rounds with %d/%d accepted",
                    rounds, len(accepted), config.target_count,
                )
                break
            demos = sample_demonstrations(pool, config.demos_per_prompt, rng)
            prompt = build_instruction_prompt(demos, domain_name)
            try:
                raw = backend.complete(prompt, config.sampling)
            except BackendError as exc:
                status = "backend_error"
                error = str(exc)
                log.error("generation aborted after %d rounds: %s", rounds, exc)
                break
            rounds += 1
            # the prompt ends with the next item number; re-attach it so the
            # first generated block parses like the rest
            candidates = parse_generated_tasks(continuation_cue(len(demos)) + raw)
            candidates = [
                replace(t, iteration=iteration, demo_seed_ids=tuple(d.seed_id for d in demos))
                for t in candidates
            ]
            room = config.target_count - len(accepted)
            fresh = filter_tasks(candidates, [], config.dedup_threshold, rouge_set=rouge_set)[:room]
            accepted.extend(fresh)
            persist(fresh)
    finally:
        if out_file is not None:
            out_file.close()
    return GenerationResult(tasks=accepted, status=status, rounds=rounds, error=error)
