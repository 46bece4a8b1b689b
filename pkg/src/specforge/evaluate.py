"""k-shot evaluation harness: task files in, Table-style report out.

Task files are JSON ({task_name, task_family, instances, demos}); every
instance is scored with both token-level F1 and ROUGE-L against its gold
references, then aggregated per task, per family, and overall. Tasks with
failed instances are flagged incomplete instead of being silently averaged.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from .backend import GREEDY_PARAMS, SamplingParams
from .dataset import TEMPLATE_NO_INPUT, TEMPLATE_WITH_INPUT
from .errors import BackendError, ConfigError
from .metrics import rouge_l, token_f1

log = logging.getLogger(__name__)

TASK_FAMILIES = ("QA", "NER", "RE", "SA", "DC")


@dataclass(frozen=True)
class EvalInstance:
    instruction: str
    context: str
    golds: tuple[str, ...]


@dataclass(frozen=True)
class EvalDemo:
    instruction: str
    context: str
    response: str


@dataclass
class EvalTask:
    task_name: str
    task_family: str
    instances: list[EvalInstance]
    demos: list[EvalDemo] = field(default_factory=list)

    def validate(self) -> None:
        if self.task_family not in TASK_FAMILIES:
            raise ConfigError(f"task {self.task_name}: unknown family {self.task_family!r}")
        if not self.instances:
            raise ConfigError(f"task {self.task_name}: no instances")
        for i, inst in enumerate(self.instances):
            if not inst.golds:
                raise ConfigError(f"task {self.task_name}: instance {i} has no gold references")


def load_eval_task(path: str | Path) -> EvalTask:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    task = EvalTask(
        task_name=obj["task_name"],
        task_family=obj["task_family"],
        instances=[
            EvalInstance(
                instruction=inst["instruction"],
                context=inst.get("context", ""),
                golds=tuple(inst["gold"]),
            )
            for inst in obj["instances"]
        ],
        demos=[
            EvalDemo(
                instruction=d["instruction"],
                context=d.get("context", ""),
                response=d["response"],
            )
            for d in obj.get("demos", [])
        ],
    )
    task.validate()
    return task


def load_eval_tasks(path: str | Path) -> list[EvalTask]:
    """Load a single task file or every *.json in a directory (name order)."""
    path = Path(path)
    if path.is_dir():
        files = sorted(path.glob("*.json"))
        if not files:
            raise ConfigError(f"no task files (*.json) in {path}")
        return [load_eval_task(f) for f in files]
    return [load_eval_task(path)]


def _render_block(instruction: str, context: str, response: str | None) -> str:
    parts = [f"### Instruction:\n{instruction}\n\n"]
    if context:
        parts.append(f"### Input:\n{context}\n\n")
    parts.append("### Response:\n")
    if response is not None:
        parts.append(response)
    return "".join(parts)


def build_kshot_prompt(instance: EvalInstance, demos: list[EvalDemo], k: int) -> str:
    """k solved demonstrations (file order), then the instance with an empty
    response slot. k=0 renders the instance alone."""
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    if k > len(demos):
        raise ValueError(f"k={k} but task provides only {len(demos)} demos")
    preamble = (TEMPLATE_WITH_INPUT if instance.context else TEMPLATE_NO_INPUT).split("### Instruction:")[0]
    parts = [preamble]
    for demo in demos[:k]:
        parts.append(_render_block(demo.instruction, demo.context, demo.response) + "\n\n")
    parts.append(_render_block(instance.instruction, instance.context, None))
    return "".join(parts)


@dataclass
class InstanceResult:
    prediction: str | None
    f1: float | None
    rouge_l: float | None
    error: str | None = None


@dataclass
class TaskScore:
    task_name: str
    task_family: str
    f1: float | None
    rouge_l: float | None
    n_instances: int
    n_failed: int
    instance_results: list[InstanceResult] = field(default_factory=list)

    @property
    def complete(self) -> bool:
        return self.n_failed == 0


@dataclass
class EvalReport:
    k: int
    tasks: list[TaskScore]
    family_averages: dict[str, dict[str, float]]
    overall: dict[str, float] | None
    incomplete_tasks: list[str]

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "tasks": [
                {
                    "task_name": t.task_name,
                    "task_family": t.task_family,
                    "f1": t.f1,
                    "rouge_l": t.rouge_l,
                    "n_instances": t.n_instances,
                    "n_failed": t.n_failed,
                    "instances": [
                        {
                            "prediction": r.prediction,
                            "f1": r.f1,
                            "rouge_l": r.rouge_l,
                            "error": r.error,
                        }
                        for r in t.instance_results
                    ],
                }
                for t in self.tasks
            ],
            "family_averages": self.family_averages,
            "overall": self.overall,
            "incomplete_tasks": self.incomplete_tasks,
        }


def _mean(values: list[float]) -> float:
    return sum(values) / len(values)


def run_eval(
    tasks: list[EvalTask],
    backend,
    k: int = 0,
    params: SamplingParams = GREEDY_PARAMS,
) -> EvalReport:
    """Score every instance of every task; aggregate per task/family/overall.

    Backend failures mark the instance (and its task) rather than aborting
    the run; incomplete tasks are excluded from averages and listed in the
    report.
    """
    if not tasks:
        raise ValueError("no tasks to evaluate")
    scored: list[TaskScore] = []
    for task in tasks:
        results: list[InstanceResult] = []
        for inst in task.instances:
            prompt = build_kshot_prompt(inst, task.demos, k)
            try:
                prediction = backend.complete(prompt, params)
            except BackendError as exc:
                log.error("eval %s: instance failed: %s", task.task_name, exc)
                results.append(InstanceResult(prediction=None, f1=None, rouge_l=None, error=str(exc)))
                continue
            golds = list(inst.golds)
            results.append(
                InstanceResult(
                    prediction=prediction,
                    f1=token_f1(prediction, golds),
                    rouge_l=rouge_l(prediction, golds),
                )
            )
        n_failed = sum(1 for r in results if r.error is not None)
        done = [r for r in results if r.error is None]
        scored.append(
            TaskScore(
                task_name=task.task_name,
                task_family=task.task_family,
                f1=_mean([r.f1 for r in done]) if done and n_failed == 0 else None,
                rouge_l=_mean([r.rouge_l for r in done]) if done and n_failed == 0 else None,
                n_instances=len(results),
                n_failed=n_failed,
                instance_results=results,
            )
        )

    complete = [t for t in scored if t.complete]
    families: dict[str, dict[str, float]] = {}
    for family in TASK_FAMILIES:
        group = [t for t in complete if t.task_family == family]
        if group:
            families[family] = {
                "f1": _mean([t.f1 for t in group]),
                "rouge_l": _mean([t.rouge_l for t in group]),
            }
    overall = None
    if complete:
        overall = {
            "f1": _mean([t.f1 for t in complete]),
            "rouge_l": _mean([t.rouge_l for t in complete]),
        }
    return EvalReport(
        k=k,
        tasks=scored,
        family_averages=families,
        overall=overall,
        incomplete_tasks=[t.task_name for t in scored if not t.complete],
    )


def render_table(report: EvalReport) -> str:
    """Plain-text score table: tasks grouped by family, then averages."""
    lines = [f"{'Task':<6}{'Dataset':<28}{'F1':>8}  {'ROUGE-L':>8}   (k={report.k})"]
    lines.append("-" * 60)
    for family in TASK_FAMILIES:
        group = [t for t in report.tasks if t.task_family == family]
        for t in group:
            f1 = f"{t.f1:.4f}" if t.f1 is not None else "failed"
            rl = f"{t.rouge_l:.4f}" if t.rouge_l is not None else "failed"
            lines.append(f"{family:<6}{t.task_name:<28}{f1:>8}  {rl:>8}")
        if family in report.family_averages:
            avg = report.family_averages[family]
            lines.append(f"{'':<6}{'(family average)':<28}{avg['f1']:>8.4f}  {avg['rouge_l']:>8.4f}")
    lines.append("-" * 60)
    if report.overall is not None:
        lines.append(f"{'':<6}{'Average':<28}{report.overall['f1']:>8.4f}  {report.overall['rouge_l']:>8.4f}")
    if report.incomplete_tasks:
        lines.append(f"incomplete tasks: {', '.join(report.incomplete_tasks)}")
    return "\n".join(lines)
