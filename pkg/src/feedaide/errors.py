"""Exception taxonomy shared across the package.

Every error raised by feedaide code derives from FeedAideError so callers can
catch the whole family at an API or CLI boundary.
"""

from __future__ import annotations


class FeedAideError(Exception):
    """Base class for all feedaide errors."""


class ValidationError(FeedAideError):
    """A domain value or user input violates its contract."""


class OptionNotOfferedError(ValidationError):
    """A selected option does not match any option the model offered."""


class ConfigurationError(FeedAideError):
    """Server, app, or rule configuration is missing or malformed."""


class InvalidModelOutputError(FeedAideError):
    """Base for model payloads the flow refuses to accept."""


class SchemaViolationError(InvalidModelOutputError):
    """Model payload has the wrong shape or populates the wrong fields."""


class ConstraintViolationError(InvalidModelOutputError):
    """Model payload is well-formed but breaks a protocol constraint,
    e.g. contains a banned catch-all option."""


class ProviderError(FeedAideError):
    """Transport-level failure talking to a model provider."""

    def __init__(self, message: str, retryable: bool = True):
        super().__init__(message)
        self.retryable = retryable


class ScenarioError(FeedAideError):
    """A scripted scenario file is malformed or used incorrectly."""


class ScenarioExhaustedError(ScenarioError):
    """The scripted provider was asked for more steps than the scenario has."""


class SessionBusyError(FeedAideError):
    """Another input for the same session is still being processed."""


class SessionExpiredError(FeedAideError):
    """The session passed its inactivity deadline."""


class SessionFailedError(FeedAideError):
    """The flow moved the session to the failed state.

    Carries the diagnostic of the last error that caused the failure.
    """


class NotFoundError(FeedAideError):
    """Lookup by id found nothing."""
