"""Exception types shared across the package.

The CLI maps `NumericalError` to exit status 2 and `ConfigError` to 3.
"""

from __future__ import annotations


class StarkZeemanError(Exception):
    """Base class for all package errors."""


class DomainError(StarkZeemanError, ValueError):
    """An input lies outside the set where an operation is defined."""


class ContractError(StarkZeemanError, ValueError):
    """A documented precondition on an argument was violated."""


class UnsupportedError(StarkZeemanError, NotImplementedError):
    """The operation does not apply to this kind of system."""


class ConfigError(StarkZeemanError, ValueError):
    """Invalid parameters or configuration."""


class NumericalError(StarkZeemanError, RuntimeError):
    """A numerical procedure failed; `state` carries diagnostics."""

    def __init__(self, message: str, state: dict | None = None):
        super().__init__(message)
        self.state = state or {}
