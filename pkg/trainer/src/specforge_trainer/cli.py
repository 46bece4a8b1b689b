"""specforge-train: adapter fine-tuning on a specforge export.

    specforge-train --config train.toml
    specforge-train --validate-only --train-file train.jsonl
"""

from __future__ import annotations

import argparse
import logging
import sys

from .data import validate_export
from .train import TrainError, TrainSpec, load_train_spec, train


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="specforge-train", description=__doc__)
    parser.add_argument("--config", help="TOML config with a [train] table")
    parser.add_argument("--train-file", help="override the training JSONL path")
    parser.add_argument("--base-model", help="override the base model identifier")
    parser.add_argument("--output-dir", help="override the output directory")
    parser.add_argument("--max-steps", type=int, help="cap optimizer steps (smoke: 1)")
    parser.add_argument("--validate-only", action="store_true", help="only check the train file schema")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    try:
        spec = load_train_spec(args.config) if args.config else TrainSpec()
        if args.train_file:
            spec.train_file = args.train_file
        if args.base_model:
            spec.base_model = args.base_model
        if args.output_dir:
            spec.output_dir = args.output_dir
        if args.max_steps is not None:
            spec.max_steps = args.max_steps

        if args.validate_only:
            if not spec.train_file:
                print("error: --train-file (or config train_file) required", file=sys.stderr)
                return 1
            diagnostics = validate_export(spec.train_file)
            if diagnostics:
                for d in diagnostics:
                    print(d, file=sys.stderr)
                return 1
            print(f"ok: {spec.train_file} matches the export schema")
            return 0

        result = train(spec)
        print(
            f"trained {result.steps} step(s); final loss {result.final_loss:.4f}; "
            f"adapter update norm {result.adapter_update_norm:.4e}"
        )
        print(f"adapter -> {result.adapter_dir}")
        print(f"log     -> {result.log_path}")
        return 0
    except TrainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
