"""Exception hierarchy shared by every module, with CLI exit codes."""
from __future__ import annotations

from pathlib import Path

__all__ = [
    "SasError",
    "InputError",
    "MalformedLineError",
    "DimensionMismatchError",
    "UnknownClassError",
    "OverlappingSplitsError",
    "ConfigError",
    "ContractError",
    "DivergenceError",
]


class SasError(Exception):
    """Base class. ``exit_code`` is what the CLI returns for it."""

    exit_code: int = 1


class InputError(SasError, ValueError):
    """Bad data: unreadable files, out-of-range ids, empty splits …"""

    def __init__(self, message: str, *, path: Path | str | None = None,
                 line: int | None = None):
        self.detail = message
        self.path = Path(path) if path is not None else None
        self.line = line
        where = ""
        if self.path is not None:
            where = f"{self.path}:{line}: " if line is not None else f"{self.path}: "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(f"{where}{message}")


class MalformedLineError(InputError):
    """A line that does not parse in its file format."""


class DimensionMismatchError(InputError):
    """File contents disagree with the declared N / D / C."""


class UnknownClassError(InputError):
    """Class id outside [0, C)."""


class OverlappingSplitsError(InputError):
    """A node sits in more than one of train / val / test."""


class ConfigError(SasError, ValueError):
    """Invalid pipeline or hyper-parameter configuration."""


class ContractError(SasError, ValueError):
    """Caller broke an API precondition (shape mismatch, stale cache)."""


class DivergenceError(SasError, ArithmeticError):
    """Training produced a non-finite loss or weight."""

    exit_code = 2

    def __init__(self, epoch: int, detail: str = "non-finite loss"):
        self.epoch = epoch
        super().__init__(f"training diverged at epoch {epoch}: {detail}")
