"""Exception hierarchy for the explorer."""

from __future__ import annotations


class ExplorerError(Exception):
    """Base class for all explorer errors."""


class ConfigError(ExplorerError, ValueError):
    """A configuration value violates its invariant."""


class OutOfBoundsError(ExplorerError, ValueError):
    """A pose or point lies outside the arena."""


class FrameFormatError(ExplorerError, ValueError):
    """An IR frame file could not be decoded."""


class ReplayParseError(ExplorerError, ValueError):
    """A replay CSV row could not be parsed."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.message = message


class EmptySummaryError(ExplorerError):
    """A study summary has no trial records to work with."""


class AggregateMismatchError(ExplorerError):
    """Stored aggregates disagree with a recomputation from the trial records."""
