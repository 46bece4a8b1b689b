from __future__ import annotations

import re

import pytest

from specforge.backend import MockBackend
from specforge.errors import ConfigError
from specforge.evaluate import (
    EvalDemo,
    EvalInstance,
    EvalTask,
    build_kshot_prompt,
    load_eval_tasks,
    render_table,
    run_eval,
)
from specforge.metrics import qa_tokens, rouge_l, rouge_tokens, token_f1

from conftest import oracle_lcs


# --- metric hand examples ------------------------------------------------


def test_f1_exact_match_is_one():
    assert token_f1("Lung cancer", ["lung cancer"]) == 1.0


def test_f1_hand_token_count():
    # P = 1/2, R = 1/1 -> F1 = 2/3
    assert token_f1("lung cancer", ["cancer"]) == pytest.approx(0.6667, abs=5e-5)


def test_f1_empty_prediction():
    assert token_f1("", ["cancer"]) == 0.0


def test_f1_both_empty_after_normalization():
    assert token_f1("the", ["a"]) == 1.0  # articles vanish on both sides


def test_f1_max_over_golds():
    assert token_f1("cisplatin", ["nothing shared", "cisplatin"]) == 1.0


def test_f1_multiset_semantics():
    # repeated tokens match per occurrence: pred has one "cell", gold has two
    assert token_f1("cell", ["cell cell"]) == pytest.approx(2 * 1.0 * 0.5 / 1.5)


def test_rouge_identical_is_one():
    assert rouge_l("a b c d", ["a b c d"]) == 1.0


def test_rouge_hand_lcs():
    # LCS = 3, P = 3/4, R = 1 -> F = 6/7 = 0.8571; requires keeping "a"
    assert rouge_l("a b c d", ["a c d"]) == pytest.approx(0.8571, abs=5e-5)


def test_rouge_disjoint_vocab_zero():
    assert rouge_l("x y z", ["p q r"]) == 0.0


def test_rouge_self_is_one_any_nonempty():
    for text in ("a", "the patient improved", "x"):
        assert rouge_l(text, [text]) == 1.0


def test_rouge_subsequence_not_substring():
    # "a c" is a subsequence of "a b c" though not a substring
    assert rouge_l("a c", ["a b c"]) == pytest.approx(2 * (2 / 2) * (2 / 3) / ((2 / 2) + (2 / 3)))


def test_normalization_pipelines_differ_on_articles():
    assert qa_tokens("the lung cancer") == ["lung", "cancer"]
    assert rouge_tokens("the lung cancer") == ["the", "lung", "cancer"]
    assert qa_tokens("Drug-drug interaction!") == ["drug", "drug", "interaction"]


def test_single_token_f1_is_zero_or_one():
    assert token_f1("yes", ["yes"]) == 1.0
    assert token_f1("yes", ["no"]) == 0.0


def test_metrics_against_bruteforce_oracle_fuzz():
    import random
    rng = random.Random(31)
    vocab = ["alpha", "beta", "gamma", "delta", "eps", "zeta"]
    for _ in range(200):
        pred = " ".join(rng.choice(vocab) for _ in range(rng.randrange(0, 12)))
        gold = " ".join(rng.choice(vocab) for _ in range(rng.randrange(0, 12)))
        # rouge reference
        pt, gt = rouge_tokens(pred), rouge_tokens(gold)
        if not pt and not gt:
            ref_r = 1.0
        elif not pt or not gt:
            ref_r = 0.0
        else:
            lcs = oracle_lcs(pt, gt)
            ref_r = 0.0 if lcs == 0 else 2 * (lcs / len(pt)) * (lcs / len(gt)) / ((lcs / len(pt)) + (lcs / len(gt)))
        assert rouge_l(pred, [gold]) == ref_r


# --- prompts -------------------------------------------------------------


def _task():
    return EvalTask(
        task_name="toy",
        task_family="QA",
        instances=[EvalInstance(instruction="Q1 here?", context="ctx1", golds=("gold one",))],
        demos=[
            EvalDemo(instruction=f"Demo question {i}?", context=f"demo ctx {i}", response=f"demo answer {i}")
            for i in range(5)
        ],
    )


def test_kshot_zero_has_no_demo_blocks():
    task = _task()
    prompt = build_kshot_prompt(task.instances[0], task.demos, 0)
    assert "demo answer" not in prompt
    assert prompt.count("### Instruction:") == 1
    assert prompt.endswith("### Response:\n")


def test_kshot_five_blocks_then_instance():
    task = _task()
    prompt = build_kshot_prompt(task.instances[0], task.demos, 5)
    assert prompt.count("### Instruction:") == 6
    assert prompt.count("### Response:") == 6
    # demo order follows file order
    positions = [prompt.index(f"demo answer {i}") for i in range(5)]
    assert positions == sorted(positions)
    assert prompt.rstrip().endswith("### Response:")


def test_kshot_prompt_byte_stable():
    task = _task()
    a = build_kshot_prompt(task.instances[0], task.demos, 3)
    b = build_kshot_prompt(task.instances[0], task.demos, 3)
    assert a == b


def test_kshot_too_many_demos_raises():
    task = _task()
    with pytest.raises(ValueError):
        build_kshot_prompt(task.instances[0], task.demos, 6)


# --- harness -------------------------------------------------------------


def echo_gold_backend(tasks):
    """Mock scripted to answer every instance with its first gold."""
    rules = []
    for task in tasks:
        for inst in task.instances:
            rules.append({"pattern": re.escape(inst.instruction), "replies": [inst.golds[0]]})
    return MockBackend({"completions": rules})


def toy_tasks():
    return [
        EvalTask(
            task_name="qa-toy",
            task_family="QA",
            instances=[
                EvalInstance("What gene causes CF?", "ctx", ("CFTR",)),
                EvalInstance("Which enzyme do statins inhibit?", "ctx", ("HMG-CoA reductase",)),
            ],
        ),
        EvalTask(
            task_name="ner-toy",
            task_family="NER",
            instances=[EvalInstance("List the drugs.", "ctx", ("cisplatin, carboplatin",))],
        ),
    ]


def test_run_eval_echo_gold_scores_one():
    tasks = toy_tasks()
    report = run_eval(tasks, echo_gold_backend(tasks), k=0)
    assert report.overall == {"f1": 1.0, "rouge_l": 1.0}
    assert report.family_averages["QA"]["f1"] == 1.0
    assert not report.incomplete_tasks


def test_run_eval_empty_output_scores_zero():
    tasks = toy_tasks()
    backend = MockBackend({"completions": [{"pattern": ".", "replies": [""]}], "default_completion": ""})
    report = run_eval(tasks, backend, k=0)
    assert report.overall == {"f1": 0.0, "rouge_l": 0.0}


def test_run_eval_mixed_scores_hand_mean():
    # task A scores 1.0 (echo), task B scores 0.0 (empty) -> overall 0.5
    tasks = toy_tasks()
    rules = []
    for inst in tasks[0].instances:
        rules.append({"pattern": re.escape(inst.instruction), "replies": [inst.golds[0]]})
    rules.append({"pattern": ".", "replies": [""], "cycle": True})
    backend = MockBackend({"completions": rules})
    report = run_eval(tasks, backend, k=0)
    assert abs(report.overall["f1"] - 0.5) <= 1e-9
    assert abs(report.overall["rouge_l"] - 0.5) <= 1e-9


def test_run_eval_failure_flags_incomplete():
    tasks = toy_tasks()
    rules = [{"pattern": "What gene", "replies": [{"error": "refusal"}]},
             {"pattern": ".", "replies": ["CFTR"], "cycle": True}]
    backend = MockBackend({"completions": rules})
    report = run_eval(tasks, backend, k=0)
    assert report.incomplete_tasks == ["qa-toy"]
    qa = [t for t in report.tasks if t.task_name == "qa-toy"][0]
    assert qa.f1 is None and qa.n_failed == 1
    # overall excludes the incomplete task instead of averaging partial data
    assert report.overall is not None
    ner = [t for t in report.tasks if t.task_name == "ner-toy"][0]
    assert report.overall["f1"] == ner.f1


def test_report_averages_recomputable_from_instances():
    tasks = toy_tasks()
    report = run_eval(tasks, echo_gold_backend(tasks), k=0)
    for task in report.tasks:
        per_instance = [r.f1 for r in task.instance_results if r.error is None]
        assert task.f1 == pytest.approx(sum(per_instance) / len(per_instance), abs=1e-12)


def test_overall_is_mean_of_task_scores():
    tasks = toy_tasks()
    report = run_eval(tasks, echo_gold_backend(tasks), k=0)
    task_scores = [t.f1 for t in report.tasks]
    assert report.overall["f1"] == pytest.approx(sum(task_scores) / len(task_scores), abs=1e-9)


def test_render_table_lists_tasks_and_average():
    tasks = toy_tasks()
    report = run_eval(tasks, echo_gold_backend(tasks), k=0)
    table = render_table(report)
    assert "qa-toy" in table and "ner-toy" in table
    assert "Average" in table


def test_load_eval_tasks_from_fixture_dir(fixtures_dir):
    tasks = load_eval_tasks(fixtures_dir / "eval_tasks")
    names = [t.task_name for t in tasks]
    assert names == sorted(names)
    assert len(tasks) == 3
    assert all(all(inst.golds for inst in t.instances) for t in tasks)


def test_task_validation_errors():
    with pytest.raises(ConfigError, match="family"):
        EvalTask("x", "BOGUS", [EvalInstance("i", "", ("g",))]).validate()
    with pytest.raises(ConfigError, match="gold"):
        EvalTask("x", "QA", [EvalInstance("i", "", ())]).validate()
    with pytest.raises(ConfigError, match="instances"):
        EvalTask("x", "QA", []).validate()


def test_run_eval_with_demos_from_fixture(fixtures_dir):
    tasks = load_eval_tasks(fixtures_dir / "eval_tasks")
    factoid = [t for t in tasks if t.task_name == "toy-bioasq-factoid"][0]
    backend = echo_gold_backend([factoid])
    report = run_eval([factoid], backend, k=5)
    assert report.k == 5
    assert report.overall["f1"] == 1.0
