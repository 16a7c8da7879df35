"""Shared exception types; the CLI maps them onto exit codes."""


class KtbenchError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(KtbenchError):
    """Invalid experiment, model, or backend configuration."""


class DataError(KtbenchError):
    """Problem with an input file or dataset.

    Carries the 1-based source row number when one is known.
    """

    def __init__(self, message: str, row: int | None = None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class ModelError(KtbenchError):
    """A model failed to fit or to produce a prediction."""
