"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: usage problems -> 1, data problems -> 2,
backend problems -> 3.
"""


class CsqeError(Exception):
    """Base class for all toolkit errors."""


class UsageError(CsqeError):
    """Bad command line or incompatible flag combination."""


class DataFormatError(CsqeError):
    """Malformed input data (corpus, queries, qrels, run files, index files)."""


class BackendError(CsqeError):
    """Text-generation backend failure (network, protocol, configuration)."""

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


class FixtureMissError(BackendError):
    """The mock backend has no fixture for a requested (prompt hash, ordinal)."""
