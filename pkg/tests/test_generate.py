from __future__ import annotations

import random

import pytest

from specforge.backend import MockBackend, SamplingParams
from specforge.generate import (
    GeneratedTask,
    GenerationConfig,
    build_instruction_prompt,
    continuation_cue,
    filter_tasks,
    format_task_block,
    generate_instructions,
    load_tasks,
    parse_generated_tasks,
)
from specforge.metrics import rouge_l_pair
from specforge.seeds import SeedExample, SeedPool


def make_pool(n=5):
    return SeedPool([
        SeedExample(
            instruction=f"Seed instruction variant number {i} about topic {i}",
            context=f"seed context {i}",
            response="r",
            seed_id=i,
        )
        for i in range(n)
    ])


def demo_seeds():
    return [
        SeedExample(instruction="Name the disease.", context="Patient has cystic fibrosis.", response="cf", seed_id=0),
        SeedExample(instruction="List the drugs.", context="", response="none", seed_id=1),
        SeedExample(instruction="Answer yes or no.", context="Is water wet?", response="yes", seed_id=2),
    ]


def test_prompt_contains_header_demos_and_cue():
    prompt = build_instruction_prompt(demo_seeds(), "biomedical")
    assert "set of 20 diverse task instructions about a biomedical domain" in prompt
    assert "List of 20 tasks:" in prompt
    assert "1. Instruction: Name the disease." in prompt
    assert "2. Instruction: List the drugs." in prompt
    assert "2. Input:\n<noinput>" in prompt
    assert "3. Instruction: Answer yes or no." in prompt
    assert prompt.endswith("4. Instruction:")
    for i in range(1, 9):
        assert f"\n{i}. " in prompt or prompt.count(f"{i}.") >= 1  # requirements list 1-8 present


def test_prompt_single_demo_cue_is_two():
    prompt = build_instruction_prompt(demo_seeds()[:1], "biomedical")
    assert prompt.endswith("2. Instruction:")


def test_prompt_domain_substitution():
    prompt = build_instruction_prompt(demo_seeds(), "sports")
    assert "about a sports domain" in prompt
    assert "focusing on a sports domain" in prompt
    assert "biomedical" not in prompt


def test_parse_two_complete_one_truncated():
    raw = (
        "1. Instruction: First complete task here\n"
        "1. Input:\nsome input text\n\n"
        "2. Instruction: Second complete task here\n"
        "2. Input:\n<noinput>\n\n"
        "3. Instruction: this one was cut off mid"
    )
    tasks = parse_generated_tasks(raw)
    assert len(tasks) == 2
    assert tasks[0].instruction == "First complete task here"
    assert tasks[0].context == "some input text"
    assert tasks[1].context == ""


def test_parse_empty_string():
    assert parse_generated_tasks("") == []


def test_parse_noinput_sentinel():
    raw = "1. Instruction: Do something real\n1. Input:\n<noinput>\n"
    tasks = parse_generated_tasks(raw)
    assert len(tasks) == 1
    assert tasks[0].context == ""


def test_parse_interior_block_without_input_kept():
    raw = (
        "1. Instruction: No input task\n\n"
        "2. Instruction: Has input\n"
        "2. Input:\nstuff here\n"
    )
    tasks = parse_generated_tasks(raw)
    assert len(tasks) == 2
    assert tasks[0] == GeneratedTask(instruction="No input task", context="")
    assert tasks[1].context == "stuff here"


def test_parse_unparseable_returns_empty():
    assert parse_generated_tasks("just prose with no numbering at all") == []


def test_render_parse_round_trip_idempotent():
    tasks = [
        GeneratedTask(instruction="Alpha beta gamma question?", context="with context"),
        GeneratedTask(instruction="Delta epsilon directive now", context=""),
        GeneratedTask(instruction="Another distinct instruction text", context="multi\nline\ncontext"),
    ]
    rendered = "".join(
        format_task_block(i + 1, t.instruction, t.context) + "\n" for i, t in enumerate(tasks)
    )
    parsed = parse_generated_tasks(rendered)
    assert [(t.instruction, t.context) for t in parsed] == [(t.instruction, t.context) for t in tasks]
    rendered2 = "".join(
        format_task_block(i + 1, t.instruction, t.context) + "\n" for i, t in enumerate(parsed)
    )
    assert rendered2 == rendered


def test_filter_rejects_seed_identical():
    seeds = [SeedExample(instruction="Name the disease mentioned here", response="x")]
    cands = [GeneratedTask(instruction="Name the disease mentioned here")]
    assert filter_tasks(cands, seeds, 0.7) == []


def test_filter_accepts_disjoint_vocab():
    seeds = [SeedExample(instruction="Name the disease mentioned here", response="x")]
    cands = [GeneratedTask(instruction="Count every protein listed below")]
    accepted = filter_tasks(cands, seeds, 0.7)
    assert len(accepted) == 1


def test_filter_intra_batch_duplicates_collide():
    cands = [
        GeneratedTask(instruction="Summarize the study findings clearly"),
        GeneratedTask(instruction="Summarize the study findings clearly"),
    ]
    accepted = filter_tasks(cands, [], 0.7)
    assert len(accepted) == 1


def test_filter_short_instructions_dropped():
    cands = [GeneratedTask(instruction="Too short")]
    assert filter_tasks(cands, [], 0.7) == []


def test_filter_threshold_validated():
    with pytest.raises(ValueError):
        filter_tasks([], [], 1.0)


def _round_reply(tasks):
    """Reply continuing from the '<n>. Instruction:' cue with two tasks."""
    (i1, c1), (i2, c2) = tasks
    return f" {i1}\n4. Input:\n{c1}\n\n5. Instruction: {i2}\n5. Input:\n{c2}\n"


def test_generate_two_fresh_per_round_target_six():
    replies = [
        _round_reply([("Alpha one instruction text", "ctx"), ("Beta two instruction text", "ctx")]),
        _round_reply([("Gamma three instruction text", "ctx"), ("Delta four instruction text", "ctx")]),
        _round_reply([("Epsilon five instruction text", "ctx"), ("Zeta six instruction text", "ctx")]),
    ]
    mock = MockBackend({"completions": [{"pattern": "List of 20 tasks", "replies": replies}]})
    config = GenerationConfig(target_count=6, sampling=SamplingParams(max_tokens=512))
    result = generate_instructions(make_pool(), mock, config, random.Random(0))
    assert result.status == "ok"
    assert result.rounds == 3
    assert len(result.tasks) == 6
    assert all(t.iteration == 1 for t in result.tasks)
    assert all(len(t.demo_seed_ids) == 3 for t in result.tasks)


def test_generate_duplicates_only_exhausts_budget():
    reply = _round_reply([("Same instruction every round", "c"), ("Same instruction every round", "c")])
    mock = MockBackend({"completions": [{"pattern": "List of 20 tasks", "replies": [reply], "cycle": True}]})
    config = GenerationConfig(target_count=4, max_rounds=7)
    result = generate_instructions(make_pool(), mock, config, random.Random(0))
    assert result.status == "budget_exhausted"
    assert result.rounds == 7
    assert len(result.tasks) == 1  # first copy accepted, every later one collides


def test_generate_backend_error_keeps_partials(tmp_path):
    replies = [
        _round_reply([("Alpha one instruction text", "c"), ("Beta two instruction text", "c")]),
        {"error": "transport"},
        {"error": "transport"},
        {"error": "transport"},
    ]
    mock = MockBackend({"completions": [{"pattern": "List of 20 tasks", "replies": replies}]})
    out = tmp_path / "tasks.jsonl"
    config = GenerationConfig(target_count=6)
    result = generate_instructions(make_pool(), mock, config, random.Random(0), out_path=out)
    assert result.status == "backend_error"
    assert len(result.tasks) == 2
    assert len(load_tasks(out)) == 2  # partial results persisted


def test_generate_resume_is_noop_when_target_met(tmp_path):
    replies = [_round_reply([("Alpha one instruction text", "c"), ("Beta two instruction text", "c")])]
    script = {"completions": [{"pattern": "List of 20 tasks", "replies": replies}]}
    out = tmp_path / "tasks.jsonl"
    config = GenerationConfig(target_count=2)
    first = generate_instructions(make_pool(), MockBackend(script), config, random.Random(9), out_path=out)
    assert first.status == "ok" and first.rounds == 1
    blob = out.read_bytes()

    class ExplodingBackend:
        def complete(self, *a, **k):
            raise AssertionError("resume should not call the backend")

    second = generate_instructions(make_pool(), ExplodingBackend(), config, random.Random(9), out_path=out)
    assert second.status == "ok"
    assert second.rounds == 0
    assert out.read_bytes() == blob


def test_generate_accepted_pairwise_below_threshold():
    replies = [
        _round_reply([("Identify the gene in the passage", "c"), ("Count the drugs in this sentence", "c")]),
        _round_reply([("Identify the gene in the passage", "c"), ("Classify sentiment of a review", "c")]),
        _round_reply([("Rank risk factors by hazard ratio", "c"), ("Translate the abbreviation to full form", "c")]),
    ]
    mock = MockBackend({"completions": [{"pattern": "List of 20 tasks", "replies": replies}]})
    config = GenerationConfig(target_count=5, dedup_threshold=0.7)
    result = generate_instructions(make_pool(), mock, config, random.Random(0))
    instructions = [t.instruction for t in result.tasks]
    assert len(instructions) == 5
    for i in range(len(instructions)):
        for j in range(i + 1, len(instructions)):
            assert rouge_l_pair(instructions[i], instructions[j]) < 0.7


def test_cue_matches_demo_count():
    assert continuation_cue(3) == "4. Instruction:"
    assert continuation_cue(1) == "2. Instruction:"
