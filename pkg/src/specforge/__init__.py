"""specforge: turn a few domain seeds plus an unlabeled corpus into
instruction-tuning data, and measure the result.

Pipeline stages: index -> generate -> respond -> (iterate) -> export -> eval,
all runnable from the `specforge` CLI against a remote backend or the bundled
deterministic mock.
"""

__version__ = "0.1.0"
