"""Expert-vs-base contrastive token selection for iterative runs.

Default mode scores log p_expert - log p_base over an adaptive plausibility
mask (tokens the expert gives at least alpha of its max probability);
prob_diff mode subtracts raw probabilities instead, kept for ablation.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

from .backend import RESIDUAL_TOKEN_ID, TokenDistribution, truncate_at_stop
from .generate import GeneratedTask
from .index import InvertedIndex, query_top_k
from .respond import (
    DecodeParams,
    SpecializationRecord,
    build_query,
    build_response_prompt,
    marginalized_next_step,
)

log = logging.getLogger(__name__)

DEFAULT_PLAUSIBILITY_ALPHA = 0.1

# floor for base probabilities of tokens absent from its reported top-k;
# keeps log-ratio finite without letting unseen tokens dominate
BASE_PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class ContrastParams:
    plausibility_alpha: float = DEFAULT_PLAUSIBILITY_ALPHA
    mode: str = "log_ratio"  # log_ratio | prob_diff

    def __post_init__(self):
        if not (0 < self.plausibility_alpha < 1):
            raise ValueError(f"plausibility_alpha must be in (0, 1), got {self.plausibility_alpha}")
        if self.mode not in ("log_ratio", "prob_diff"):
            raise ValueError(f"mode must be log_ratio or prob_diff, got {self.mode!r}")


def plausibility_mask(expert_dist: TokenDistribution, alpha: float) -> set[int]:
    """Tokens with expert probability >= alpha * max expert probability.

    Never empty: the argmax always qualifies. The residual-mass entry is
    bookkeeping, not a token, and is excluded.
    """
    best = 0.0
    for tid, _, p in expert_dist.entries:
        if tid != RESIDUAL_TOKEN_ID and p > best:
            best = p
    cutoff = alpha * best
    return {
        tid for tid, _, p in expert_dist.entries
        if tid != RESIDUAL_TOKEN_ID and p >= cutoff
    }


def contrast_select(
    expert_dist: TokenDistribution,
    base_dist: TokenDistribution,
    params: ContrastParams,
) -> tuple[int, str]:
    """Pick the masked token maximizing the expert-vs-base contrast.

    Ties break to the lowest token_id. Tokens missing from the base
    distribution get probability BASE_PROB_FLOOR in log_ratio mode and 0.0
    in prob_diff mode (the literal subtraction reading).
    """
    mask = plausibility_mask(expert_dist, params.plausibility_alpha)
    base_p = {tid: p for tid, _, p in base_dist.entries}
    best_tid = None
    best_text = ""
    best_score = -math.inf
    for tid, text, p in sorted(expert_dist.entries):
        if tid not in mask:
            continue
        if params.mode == "log_ratio":
            score = math.log(p) - math.log(max(base_p.get(tid, 0.0), BASE_PROB_FLOOR))
        else:
            score = p - base_p.get(tid, 0.0)
        if score > best_score:
            best_tid, best_text, best_score = tid, text, score
    assert best_tid is not None  # mask is never empty
    return best_tid, best_text


def contrastive_next_step(expert, base, prefix: str, params: ContrastParams) -> tuple[int, str]:
    """One contrastive step against live backends."""
    if not prefix:
        raise ValueError("prefix must be nonempty")
    expert_dist = expert.next_token_distribution(prefix)
    base_dist = base.next_token_distribution(prefix)
    return contrast_select(expert_dist, base_dist, params)


def contrastive_generate(
    expert,
    base,
    prompt: str,
    decode: DecodeParams = DecodeParams(),
    contrast: ContrastParams = ContrastParams(),
) -> str:
    """Greedy loop over contrastive_next_step until stop or max_steps."""
    response = ""
    prefix = prompt
    for _ in range(decode.max_steps):
        _, text = contrastive_next_step(expert, base, prefix, contrast)
        tentative = response + text
        cut = truncate_at_stop(tentative, decode.stop_sequences)
        if cut != tentative:
            return cut
        response = tentative
        prefix += text
    return response


def generate_response_contrastive(
    task: GeneratedTask,
    expert,
    base,
    decode: DecodeParams = DecodeParams(),
    contrast: ContrastParams = ContrastParams(),
    domain_name: str = "biomedical",
    index: InvertedIndex | None = None,
    k: int = 5,
    iteration: int = 2,
    doc_char_budget: int = 2000,
) -> SpecializationRecord:
    """Contrastive response for one task; optionally composed with retrieval
    marginalization (both the expert and base mixtures are marginalized over
    the same retrieved documents before the contrast step)."""
    docs = []
    if index is not None:
        docs = query_top_k(index, build_query(task), k)
    if docs:
        prompts = [build_response_prompt(task, d, domain_name, doc_char_budget) for d in docs]
        weights = [d.weight for d in docs]
    else:
        prompts = [build_response_prompt(task, None, domain_name, doc_char_budget)]
        weights = [1.0]

    response = ""
    prefixes = list(prompts)
    for step in range(decode.max_steps):
        expert_dist = marginalized_next_step(expert, prefixes, weights, step_index=step)
        base_dist = marginalized_next_step(base, prefixes, weights, step_index=step)
        _, text = contrast_select(expert_dist, base_dist, contrast)
        tentative = response + text
        cut = truncate_at_stop(tentative, decode.stop_sequences)
        if cut != tentative:
            response = cut
            break
        response = tentative
        prefixes = [p + text for p in prefixes]

    record = SpecializationRecord(
        instruction=task.instruction,
        context=task.context,
        response=response,
        retrieved_doc_ids=[d.doc_id for d in docs],
        retrieval_weights=[float(w) for w in weights] if docs else [],
        iteration=iteration,
        decode_mode="contrastive",
        provenance={"k": k if docs else 0, "alpha": contrast.plausibility_alpha, "mode": contrast.mode},
    )
    if not response.strip():
        record.accepted = False
        record.reject_reason = "empty_response"
    return record
