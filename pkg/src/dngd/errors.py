"""Structured errors raised across the library."""

from __future__ import annotations


class DngdError(Exception):
    """Base class for all library errors."""


class DimensionError(DngdError):
    """Array or vector dimensions do not match the declared contract."""


class NonFiniteError(DngdError):
    """A computation produced NaN or Inf; carries the offending location."""

    def __init__(self, message: str, class_id: str | None = None, point_index: int | None = None):
        super().__init__(message)
        self.class_id = class_id
        self.point_index = point_index


class DomainError(DngdError):
    """A point, index, or configuration value lies outside its valid region."""


class FactorizationError(DngdError):
    """Cholesky failed after all damping retries."""


class ConfigError(DngdError):
    """An experiment or sweep configuration is malformed."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field
