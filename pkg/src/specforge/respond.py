"""Response generation: retrieve top-k documents for each task and decode
under the retrieval-weighted mixture of per-document next-token
distributions.

The chosen token at every step is appended to all k document-conditioned
prefixes, so a single output sequence is decoded while each branch stays
conditioned on its own document. Retrieval weights are frozen from the
initial query.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from .backend import (
    GREEDY_PARAMS,
    RESIDUAL_TOKEN_ID,
    SamplingParams,
    TokenDistribution,
    truncate_at_stop,
)
from .errors import DistributionUnsupportedError, SpecforgeError
from .generate import GeneratedTask
from .index import DEFAULT_QUERY_TERM_BUDGET, InvertedIndex, RetrievedDoc, query_top_k, tokenize

log = logging.getLogger(__name__)

DEFAULT_DOC_CHAR_BUDGET = 2000
DEFAULT_MAX_STEPS = 256

RESPONSE_PREAMBLE = (
    "You are a {domain} domain expert. Given an instruction and an input, "
    "generate the best response to solve the given {domain} task."
)

MIXTURE_TOLERANCE = 1e-9


@dataclass(frozen=True)
class DecodeParams:
    max_steps: int = DEFAULT_MAX_STEPS
    stop_sequences: tuple[str, ...] = ("\n",)
    greedy: bool = True

    def __post_init__(self):
        if self.max_steps < 1:
            raise ValueError(f"max_steps must be >= 1, got {self.max_steps}")


@dataclass
class SpecializationRecord:
    instruction: str
    context: str
    response: str
    retrieved_doc_ids: list[int] = field(default_factory=list)
    retrieval_weights: list[float] = field(default_factory=list)
    iteration: int = 1
    decode_mode: str = "marginalized"  # marginalized | no_docs | contrastive | single_doc
    accepted: bool = True
    reject_reason: str | None = None
    provenance: dict = field(default_factory=dict)

    def to_json(self) -> str:
        obj = {
            "instruction": self.instruction,
            "context": self.context,
            "response": self.response,
            "retrieved_doc_ids": self.retrieved_doc_ids,
            "retrieval_weights": self.retrieval_weights,
            "iteration": self.iteration,
            "decode_mode": self.decode_mode,
            "accepted": self.accepted,
            "reject_reason": self.reject_reason,
            "provenance": self.provenance,
        }
        return json.dumps(obj, ensure_ascii=False, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "SpecializationRecord":
        obj = json.loads(line)
        return cls(
            instruction=obj["instruction"],
            context=obj.get("context", ""),
            response=obj.get("response", ""),
            retrieved_doc_ids=list(obj.get("retrieved_doc_ids", [])),
            retrieval_weights=list(obj.get("retrieval_weights", [])),
            iteration=int(obj.get("iteration", 1)),
            decode_mode=obj.get("decode_mode", "marginalized"),
            accepted=bool(obj.get("accepted", True)),
            reject_reason=obj.get("reject_reason"),
            provenance=obj.get("provenance", {}),
        )


def load_records(path: str | Path) -> list[SpecializationRecord]:
    path = Path(path)
    if not path.exists():
        raise SpecforgeError(f"records file not found: {path} (run the respond stage first)")
    records = []
    with path.open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                records.append(SpecializationRecord.from_json(line))
    return records


def save_records(records: list[SpecializationRecord], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(record.to_json() + "\n")


def build_query(task: GeneratedTask, term_budget: int = DEFAULT_QUERY_TERM_BUDGET) -> str:
    """Retrieval query: instruction and context concatenated, capped at the
    index's query term budget."""
    if not task.instruction.strip():
        raise ValueError("task instruction is empty")
    text = task.instruction if not task.context else f"{task.instruction} {task.context}"
    terms = tokenize(text)
    if len(terms) <= term_budget:
        return text
    return " ".join(terms[:term_budget])


def query_was_truncated(task: GeneratedTask, term_budget: int = DEFAULT_QUERY_TERM_BUDGET) -> bool:
    text = task.instruction if not task.context else f"{task.instruction} {task.context}"
    return len(tokenize(text)) > term_budget


def build_response_prompt(
    task: GeneratedTask,
    doc: RetrievedDoc | None,
    domain_name: str = "biomedical",
    doc_char_budget: int = DEFAULT_DOC_CHAR_BUDGET,
) -> str:
    """Response prompt: domain-expert preamble, optional Reference block, and
    the task rendered as Instruction/Input/Response sections (no in-context
    demonstrations)."""
    parts = [RESPONSE_PREAMBLE.format(domain=domain_name), "\n\n"]
    if doc is not None:
        parts.append(f"Reference:\n{doc.text[:doc_char_budget]}\n\n")
    parts.append(f"Instruction:\n{task.instruction}\n\n")
    if task.context:
        parts.append(f"Input:\n{task.context}\n\n")
    parts.append("Response:\n")
    return "".join(parts)


def marginalized_next_step(
    backend,
    prompts: list[str],
    weights: list[float],
    step_index: int = 0,
) -> TokenDistribution:
    """Mixture of per-document next-token distributions: sum_j w_j * p_j.

    Entries with the same token_id are summed across branches; the result is
    renormalized only if float drift exceeds 1e-9.
    """
    if len(prompts) < 1:
        raise ValueError("need at least one prompt")
    if len(prompts) != len(weights):
        raise ValueError(f"{len(prompts)} prompts but {len(weights)} weights")
    if abs(sum(weights) - 1.0) > 1e-6:
        raise ValueError(f"weights must sum to 1, got {sum(weights)}")

    acc: dict[int, float] = {}
    texts: dict[int, str] = {}
    for prompt, weight in zip(prompts, weights):
        dist = backend.next_token_distribution(prompt, step_index=step_index)
        for tid, text, p in dist.entries:
            acc[tid] = acc.get(tid, 0.0) + weight * p
            texts.setdefault(tid, text)
    total = sum(acc.values())
    if abs(total - 1.0) > MIXTURE_TOLERANCE and total > 0:
        acc = {tid: p / total for tid, p in acc.items()}
    entries = [(tid, texts[tid], acc[tid]) for tid in sorted(acc)]
    mixed = TokenDistribution(step_index=step_index, entries=entries)
    mixed.validate()
    return mixed


def _sample_from(dist: TokenDistribution, rng) -> tuple[int, str]:
    real = [(tid, text, p) for tid, text, p in dist.entries if tid != RESIDUAL_TOKEN_ID]
    total = sum(p for _, _, p in real)
    r = rng.random() * total
    for tid, text, p in real:
        r -= p
        if r <= 0:
            return tid, text
    return real[-1][0], real[-1][1]


def _decode_loop(step_fn, prefixes: list[str], params: DecodeParams, rng=None) -> tuple[str, int]:
    """Shared greedy/sampled decode loop. step_fn(prefixes, step) -> dist."""
    response = ""
    steps = 0
    for step in range(params.max_steps):
        dist = step_fn(prefixes, step)
        if params.greedy:
            _, text = dist.argmax()
        else:
            if rng is None:
                raise ValueError("sampling decode requires an rng")
            _, text = _sample_from(dist, rng)
        steps += 1
        tentative = response + text
        cut = truncate_at_stop(tentative, params.stop_sequences)
        if cut != tentative:
            return cut, steps
        response = tentative
        prefixes = [p + text for p in prefixes]
    return response, steps


def greedy_decode(backend, prompt: str, params: DecodeParams) -> str:
    """Plain greedy decoding on a single prompt via the distribution path."""
    def step(prefixes, step_index):
        return backend.next_token_distribution(prefixes[0], step_index=step_index)

    text, _ = _decode_loop(step, [prompt], params)
    return text


def generate_response(
    task: GeneratedTask,
    index: InvertedIndex | None,
    backend,
    k: int = 5,
    params: DecodeParams = DecodeParams(),
    domain_name: str = "biomedical",
    weight_scheme: str = "proportional",
    softmax_temperature: float = 1.0,
    term_budget: int = DEFAULT_QUERY_TERM_BUDGET,
    doc_char_budget: int = DEFAULT_DOC_CHAR_BUDGET,
    iteration: int = 1,
    rng=None,
) -> SpecializationRecord:
    """Retrieve, build per-document prompts, and decode one response.

    No matching documents (or index=None) produces a no_docs record from a
    single unconditioned prompt. A backend without the distribution
    capability falls back to sampling the top-1 document prompt
    (decode_mode "single_doc").
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    docs: list[RetrievedDoc] = []
    if index is not None:
        query = build_query(task, term_budget)
        docs = query_top_k(
            index, query, k, weight_scheme=weight_scheme, softmax_temperature=softmax_temperature
        )

    provenance: dict = {
        "k": k,
        "query_truncated": query_was_truncated(task, term_budget) if index is not None else False,
        "docs_truncated": [len(d.text) > doc_char_budget for d in docs],
    }

    if docs:
        mode = "marginalized"
        prompts = [build_response_prompt(task, d, domain_name, doc_char_budget) for d in docs]
        weights = [d.weight for d in docs]
    else:
        mode = "no_docs"
        prompts = [build_response_prompt(task, None, domain_name, doc_char_budget)]
        weights = [1.0]

    try:
        def step(prefixes, step_index):
            return marginalized_next_step(backend, prefixes, weights, step_index=step_index)

        response, steps = _decode_loop(step, prompts, params, rng=rng)
    except DistributionUnsupportedError:
        log.info("backend lacks distributions; falling back to single-doc sampling")
        mode = "single_doc" if docs else "no_docs"
        sampling = SamplingParams(
            temperature=GREEDY_PARAMS.temperature if params.greedy else 1.0,
            top_p=1.0,
            max_tokens=params.max_steps,
            stop_sequences=params.stop_sequences,
        )
        response = backend.complete(prompts[0], sampling)
        steps = params.max_steps
        if docs:
            docs = docs[:1]
            weights = [1.0]

    provenance["steps"] = steps
    record = SpecializationRecord(
        instruction=task.instruction,
        context=task.context,
        response=response,
        retrieved_doc_ids=[d.doc_id for d in docs],
        retrieval_weights=[float(w) for w in weights] if docs else [],
        iteration=iteration,
        decode_mode=mode,
        provenance=provenance,
    )
    if not response.strip():
        record.accepted = False
        record.reject_reason = "empty_response"
    return record
