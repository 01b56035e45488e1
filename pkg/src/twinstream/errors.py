"""Exception types shared across the twinstream package."""

from __future__ import annotations


class TwinstreamError(Exception):
    """Base class for all twinstream errors."""


class InvalidInputError(TwinstreamError, ValueError):
    """An argument violated a documented precondition."""


class InsufficientDataError(TwinstreamError):
    """An estimator was asked for a value it has no data to produce."""


class NoFeasibleRenditionError(TwinstreamError):
    """Device filtering left no rendition to choose from."""


class InfeasibleConstraintsError(TwinstreamError):
    """Ladder constraints cannot be satisfied by any candidate subset."""


class TraceFormatError(TwinstreamError, ValueError):
    """A trace or catalog file failed to parse; message names the line."""


class ConfigError(TwinstreamError, ValueError):
    """An experiment configuration is missing keys or holds invalid values."""
