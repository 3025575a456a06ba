"""
Exception hierarchy shared by every tcsim module.

Library code raises these; only tcsim.main turns them into exit codes.
"""

from typing import Optional


class TcsimError(Exception):
    """Base class for all errors raised by tcsim."""


class ConfigError(TcsimError, ValueError):
    """Invalid geometry, configuration document, or command-line value."""


class MatrixFormatError(ConfigError):
    """A channel-matrix CSV file could not be parsed."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ContractViolation(TcsimError):
    """An operation was invoked outside its precondition."""


class PadOverrunError(TcsimError):
    """Raw fence cycles exceeded the padding target."""

    def __init__(self, raw: int, target: int):
        self.raw = raw
        self.target = target
        super().__init__(
            f"fence took {raw} cycles, more than the pad target of {target} cycles"
        )


class AllocationStall(TcsimError):
    """The rename free list is empty."""
