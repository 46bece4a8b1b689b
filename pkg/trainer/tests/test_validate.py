from __future__ import annotations

import json

from specforge_trainer.cli import main as cli_main
from specforge_trainer.data import encode_row, render_row, validate_export


def test_primary_export_fixture_passes_clean(fixtures_dir):
    diagnostics = validate_export(fixtures_dir / "train_fixture.jsonl")
    assert diagnostics == []


def test_smoke_fixture_passes_clean(fixtures_dir):
    assert validate_export(fixtures_dir / "train_smoke8.jsonl") == []


def test_missing_output_named_by_line(tmp_path):
    path = tmp_path / "t.jsonl"
    rows = [
        {"instruction": "a task", "input": "", "output": "fine"},
        {"instruction": "b task", "input": "x"},
    ]
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
    diagnostics = validate_export(path)
    assert len(diagnostics) == 1
    assert "line 2" in diagnostics[0] and "output" in diagnostics[0]


def test_empty_file_flagged(tmp_path):
    path = tmp_path / "t.jsonl"
    path.write_text("")
    diagnostics = validate_export(path)
    assert diagnostics and "no training rows" in diagnostics[0]


def test_missing_file_flagged(tmp_path):
    diagnostics = validate_export(tmp_path / "nope.jsonl")
    assert diagnostics and "not found" in diagnostics[0]


def test_bad_json_and_types_flagged(tmp_path):
    path = tmp_path / "t.jsonl"
    path.write_text('not json\n{"instruction": 5, "input": "", "output": "y"}\n')
    diagnostics = validate_export(path)
    assert any("line 1" in d and "JSON" in d for d in diagnostics)
    assert any("line 2" in d and "instruction" in d for d in diagnostics)


def test_extra_keys_flagged(tmp_path):
    path = tmp_path / "t.jsonl"
    path.write_text(json.dumps({"instruction": "i", "input": "", "output": "o", "extra": 1}) + "\n")
    diagnostics = validate_export(path)
    assert any("extra" in d for d in diagnostics)


def test_empty_fields_flagged(tmp_path):
    path = tmp_path / "t.jsonl"
    path.write_text(json.dumps({"instruction": "  ", "input": "", "output": ""}) + "\n")
    diagnostics = validate_export(path)
    assert any("empty instruction" in d for d in diagnostics)
    assert any("empty output" in d for d in diagnostics)


def test_render_row_both_variants():
    with_input = render_row({"instruction": "i", "input": "c", "output": "o"})
    assert "### Input:\nc" in with_input[0]
    assert with_input[0].endswith("### Response:\n")
    assert with_input[1] == "o"
    no_input = render_row({"instruction": "i", "input": "", "output": "o"})
    assert "### Input:" not in no_input[0]


def test_encode_masks_prompt_tokens(tiny_model_dir):
    from transformers import AutoTokenizer
    tokenizer = AutoTokenizer.from_pretrained(tiny_model_dir)
    row = {"instruction": "Name the disease", "input": "some context", "output": "an answer here"}
    example = encode_row(row, tokenizer, max_seq_len=256)
    prompt, _ = render_row(row)
    n_prompt = len(tokenizer(prompt, add_special_tokens=False)["input_ids"])
    assert all(l == -100 for l in example.labels[:n_prompt])
    tail = example.labels[n_prompt:]
    assert tail and all(l != -100 for l in tail)
    assert example.input_ids[n_prompt:] == tail  # loss only on response tokens


def test_cli_validate_only(fixtures_dir, capsys):
    code = cli_main(["--validate-only", "--train-file", str(fixtures_dir / "train_fixture.jsonl")])
    assert code == 0
    assert "ok:" in capsys.readouterr().out


def test_cli_validate_only_bad_file(tmp_path, capsys):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"instruction": "x"}\n')
    code = cli_main(["--validate-only", "--train-file", str(path)])
    assert code == 1
    assert "line 1" in capsys.readouterr().err
