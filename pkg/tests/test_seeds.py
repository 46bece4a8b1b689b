from __future__ import annotations

import json
import random

import pytest

from specforge.errors import SeedFileError
from specforge.seeds import load_seeds, sample_demonstrations, save_seeds


def write_seeds(path, rows):
    with path.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")


def make_rows(n):
    return [
        {"instruction": f"Task number {i}", "context": f"ctx {i}", "response": f"answer {i}", "source_tag": "t"}
        for i in range(n)
    ]


def test_load_80_seeds(tmp_path):
    path = tmp_path / "seeds.jsonl"
    write_seeds(path, make_rows(80))
    pool = load_seeds(path)
    assert len(pool) == 80
    assert pool[0].instruction == "Task number 0"
    assert [s.seed_id for s in pool] == list(range(80))


def test_load_single_seed(tmp_path):
    path = tmp_path / "seeds.jsonl"
    write_seeds(path, make_rows(1))
    assert len(load_seeds(path)) == 1


def test_duplicate_pairs_name_both_lines(tmp_path):
    rows = make_rows(8)
    rows[6] = dict(rows[2])  # duplicate of line 3 on line 7
    path = tmp_path / "seeds.jsonl"
    write_seeds(path, rows)
    with pytest.raises(SeedFileError) as err:
        load_seeds(path)
    assert "3" in str(err.value) and "7" in str(err.value)


def test_same_instruction_different_context_ok(tmp_path):
    rows = make_rows(2)
    rows[1]["instruction"] = rows[0]["instruction"]
    path = tmp_path / "seeds.jsonl"
    write_seeds(path, rows)
    assert len(load_seeds(path)) == 2


def test_empty_file_rejected(tmp_path):
    path = tmp_path / "seeds.jsonl"
    path.write_text("")
    with pytest.raises(SeedFileError, match="empty"):
        load_seeds(path)


def test_parse_error_names_line(tmp_path):
    path = tmp_path / "seeds.jsonl"
    path.write_text('{"instruction": "a", "response": "b"}\nnot json\n')
    with pytest.raises(SeedFileError, match="line 2"):
        load_seeds(path)


def test_missing_field_names_line(tmp_path):
    path = tmp_path / "seeds.jsonl"
    path.write_text('{"instruction": "a"}\n')
    with pytest.raises(SeedFileError, match="line 1.*response"):
        load_seeds(path)


def test_blank_instruction_rejected(tmp_path):
    path = tmp_path / "seeds.jsonl"
    path.write_text('{"instruction": "   ", "response": "b"}\n')
    with pytest.raises(SeedFileError, match="line 1"):
        load_seeds(path)


def test_missing_context_becomes_empty(tmp_path):
    path = tmp_path / "seeds.jsonl"
    path.write_text('{"instruction": "a task here", "response": "b"}\n')
    assert load_seeds(path)[0].context == ""


def test_round_trip(tmp_path):
    src = tmp_path / "seeds.jsonl"
    write_seeds(src, make_rows(12))
    pool = load_seeds(src)
    out = tmp_path / "copy.jsonl"
    save_seeds(pool, out)
    again = load_seeds(out)
    assert again.seeds == pool.seeds


def test_sample_three_distinct(tmp_path):
    path = tmp_path / "seeds.jsonl"
    write_seeds(path, make_rows(80))
    pool = load_seeds(path)
    demos = sample_demonstrations(pool, 3, random.Random(0))
    assert len(demos) == 3
    assert len({d.instruction for d in demos}) == 3


def test_sample_whole_pool_is_permutation(tmp_path):
    path = tmp_path / "seeds.jsonl"
    write_seeds(path, make_rows(10))
    pool = load_seeds(path)
    demos = sample_demonstrations(pool, 10, random.Random(1))
    assert sorted(d.seed_id for d in demos) == list(range(10))


def test_sample_deterministic_for_seed(tmp_path):
    path = tmp_path / "seeds.jsonl"
    write_seeds(path, make_rows(30))
    pool = load_seeds(path)
    a = sample_demonstrations(pool, 5, random.Random(42))
    b = sample_demonstrations(pool, 5, random.Random(42))
    assert a == b


def test_sample_pairwise_distinct_many_draws(tmp_path):
    path = tmp_path / "seeds.jsonl"
    write_seeds(path, make_rows(25))
    pool = load_seeds(path)
    rng = random.Random(3)
    for n in (1, 2, 5, 12, 25):
        demos = sample_demonstrations(pool, n, rng)
        assert len({(d.instruction, d.context) for d in demos}) == n


def test_sample_too_many_raises(tmp_path):
    path = tmp_path / "seeds.jsonl"
    write_seeds(path, make_rows(4))
    pool = load_seeds(path)
    with pytest.raises(ValueError):
        sample_demonstrations(pool, 5, random.Random(0))
