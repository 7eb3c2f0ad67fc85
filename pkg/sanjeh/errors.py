"""
errors — exception hierarchy for the audit harness.

    SanjehError
     ├── ValidationError        bad data files / bad specs
     │    ├── CatalogError
     │    ├── TemplateError
     │    ├── RegistryError
     │    └── ConfigError
     ├── SessionError           trace file cannot be opened
     ├── ReplayError            replay trace has no entry for a key
     ├── ProviderError          chat endpoint failed after transport retries
     ├── OracleError            gender oracle failed after transport retries
     ├── UndefinedMetricError   metric over an empty set
     └── ReportError            report I/O or figure spec problems

ProviderError / OracleError / ReplayError abort one task only; the runner
collects them and keeps going.
"""

from __future__ import annotations


class SanjehError(Exception):
    """Base class for every error raised by the harness."""


class ValidationError(SanjehError):
    pass


class CatalogError(ValidationError):
    pass


class TemplateError(ValidationError):
    pass


class RegistryError(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


class SessionError(SanjehError):
    pass


class ReplayError(SanjehError):
    """No recorded response for ``key`` / ``attempt_index``."""

    def __init__(self, key: str, attempt_index: int = 0):
        self.key = key
        self.attempt_index = attempt_index
        super().__init__(f"replay miss: {key} (attempt {attempt_index})")


class ProviderError(SanjehError):
    pass


class OracleError(SanjehError):
    pass


class UndefinedMetricError(SanjehError):
    pass


class ReportError(SanjehError):
    pass
