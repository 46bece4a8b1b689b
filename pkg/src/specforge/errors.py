"""Exception hierarchy shared across the pipeline.

The CLI maps these onto exit codes: ConfigError -> 1, everything else
derived from SpecforgeError -> 2.
"""


class SpecforgeError(Exception):
    """Base class for all pipeline errors."""


class ConfigError(SpecforgeError):
    """Invalid configuration or input file; names the offending field/line."""


class SeedFileError(ConfigError):
    """Seed pool file failed validation."""


class IndexError_(SpecforgeError):
    """Corpus index build/load failure."""


class IndexFormatError(IndexError_):
    """Index file is corrupt, truncated, or has an unsupported version."""


class BackendError(SpecforgeError):
    """Base class for generation-backend failures."""


class TransportError(BackendError):
    """Retriable transport-level failure (connection, 5xx)."""


class BackendRefusalError(BackendError):
    """Non-retriable backend rejection (refusal, overlong prompt, 4xx)."""


class DistributionUnsupportedError(BackendError):
    """Backend cannot serve per-step token distributions."""


class MockScriptError(BackendError):
    """Mock backend script has no rule matching the request."""


class EmptyTrainingSetError(SpecforgeError):
    """Export refused: no valid records to write."""
