"""Seed pool: the small human-authored (instruction, context, response) set
that bootstraps instruction generation.

File format is JSON-lines, one object per line with keys
instruction/context/response/source_tag; context and source_tag may be
omitted. Duplicate (instruction, context) pairs are a hard error.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path

from .errors import SeedFileError

# The reference setup uses a pool of 80 seeds; the loader accepts any size.
DEFAULT_POOL_SIZE = 80


@dataclass(frozen=True)
class SeedExample:
    instruction: str
    context: str = ""
    response: str = ""
    source_tag: str = ""
    seed_id: int = 0

    def validate(self) -> None:
        if not self.instruction.strip():
            raise SeedFileError("seed instruction is empty")
        if not self.response.strip():
            raise SeedFileError("seed response is empty")


@dataclass
class SeedPool:
    seeds: list[SeedExample] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.seeds)

    def __iter__(self):
        return iter(self.seeds)

    def __getitem__(self, i: int) -> SeedExample:
        return self.seeds[i]


def _parse_record(obj: dict, lineno: int, seed_id: int) -> SeedExample:
    if not isinstance(obj, dict):
        raise SeedFileError(f"line {lineno}: expected a JSON object")
    for key in ("instruction", "response"):
        if key not in obj:
            raise SeedFileError(f"line {lineno}: missing required field '{key}'")
    seed = SeedExample(
        instruction=str(obj["instruction"]),
        context=str(obj.get("context", "") or ""),
        response=str(obj["response"]),
        source_tag=str(obj.get("source_tag", "") or ""),
        seed_id=seed_id,
    )
    try:
        seed.validate()
    except SeedFileError as exc:
        raise SeedFileError(f"line {lineno}: {exc}") from None
    return seed


def load_seeds(path: str | Path) -> SeedPool:
    """Load and validate a JSON-lines seed file.

    Raises SeedFileError with line numbers on parse failures, on duplicate
    (instruction, context) pairs (all offending lines named), and on an
    empty file.
    """
    path = Path(path)
    if not path.exists():
        raise SeedFileError(f"seed file not found: {path}")
    seeds: list[SeedExample] = []
    seen: dict[tuple[str, str], int] = {}
    dupes: list[tuple[int, int]] = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SeedFileError(f"line {lineno}: invalid JSON ({exc.msg})") from None
            seed = _parse_record(obj, lineno, seed_id=len(seeds))
            key = (seed.instruction, seed.context)
            if key in seen:
                dupes.append((seen[key], lineno))
            else:
                seen[key] = lineno
            seeds.append(seed)
    if dupes:
        pairs = "; ".join(f"lines {a} and {b}" for a, b in dupes)
        raise SeedFileError(f"duplicate (instruction, context) pairs: {pairs}")
    if not seeds:
        raise SeedFileError(f"seed file is empty: {path}")
    return SeedPool(seeds)


def save_seeds(pool: SeedPool, path: str | Path) -> None:
    """Write a pool back out in the load format (round-trip safe)."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for seed in pool:
            obj = {
                "instruction": seed.instruction,
                "context": seed.context,
                "response": seed.response,
                "source_tag": seed.source_tag,
            }
            fh.write(json.dumps(obj, ensure_ascii=False, sort_keys=True) + "\n")


def sample_demonstrations(pool: SeedPool, n: int, rng: random.Random) -> list[SeedExample]:
    """Draw n distinct seeds uniformly without replacement.

    Deterministic for a fixed rng state; raises ValueError when n exceeds
    the pool size.
    """
    if n < 1:
        raise ValueError(f"need at least one demonstration, got n={n}")
    if n > len(pool):
        raise ValueError(f"cannot sample {n} demonstrations from a pool of {len(pool)}")
    return rng.sample(pool.seeds, n)
