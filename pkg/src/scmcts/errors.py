"""Exception types shared across the package."""

from __future__ import annotations


class ScmctsError(Exception):
    """Base class for every error raised by this package."""


class IllegalAction(ScmctsError):
    """An action was applied in a state where its preconditions do not hold."""


class MalformedAction(ScmctsError):
    """A line of text does not parse into a Blocksworld action."""


class Unsolvable(ScmctsError):
    """No goal-satisfying state is reachable from the queried state."""


class OracleLimitExceeded(ScmctsError):
    """The problem has more blocks than the exact-search limit allows."""


class GenerationFailed(ScmctsError):
    """The instance generator exhausted its retry budget."""


class MissingDemonstrations(ScmctsError):
    """The demonstration pool is too small for the requested shot count."""


class EmptyAnswer(ScmctsError):
    """A reward was requested for a context with no answer tokens."""


class BackendUnavailable(ScmctsError):
    """The remote policy endpoint failed or is unreachable."""


class ContextTooLong(ScmctsError):
    """Context plus generation budget exceeds the backend's sequence limit."""


class InsufficientSamples(ScmctsError):
    """Too few values to build prior reward statistics."""


class InsufficientData(ScmctsError):
    """Too few records for the requested analysis."""


class ConfigError(ScmctsError):
    """Invalid or inconsistent experiment configuration."""
