"""Shared exception types."""


class PulsewatchError(Exception):
    """Base class for all package errors."""


class DataIntegrityError(PulsewatchError):
    """Input data violates a hard validity constraint (non-finite samples, ...)."""


class SchemaError(PulsewatchError):
    """A record does not satisfy its declared schema."""


class OrderingError(PulsewatchError):
    """Out-of-order or duplicate window in a per-patient stream."""


class ConfigError(PulsewatchError):
    """Invalid configuration (overlapping script segments, bad thresholds, ...)."""


class ParseError(PulsewatchError):
    """A persisted file failed to parse; message names the offending line."""


class RegistrationError(PulsewatchError):
    """Tool registration conflict (duplicate name, empty output contract)."""


class PlanError(PulsewatchError):
    """A tool plan referenced names outside the allowed list."""


class BackendError(PulsewatchError):
    """A language-model backend failed (transport, HTTP status, ...)."""


class BackendTimeout(BackendError):
    """A language-model backend did not answer within its deadline."""
