"""Exception types raised across the package."""


class FiberGanError(Exception):
    """Base class for all package errors."""


class ConfigError(FiberGanError, ValueError):
    """A configuration value is outside its allowed range."""


class InputShapeError(FiberGanError, ValueError):
    """Array lengths or widths do not match what an operation requires."""


class DegenerateInputError(FiberGanError, ValueError):
    """Input carries no usable content (e.g. an all-zero signal)."""


class WindowOutOfRangeError(InputShapeError):
    """A condition window would extend past the edge of its block."""


class NumericError(FiberGanError, ArithmeticError):
    """A computation produced a value outside its valid domain."""


class TrainingDivergedError(FiberGanError, RuntimeError):
    """A training loss became non-finite."""

    def __init__(self, epoch: int, message: str = ""):
        self.epoch = epoch
        super().__init__(message or f"training diverged at epoch {epoch}")


class FormatError(FiberGanError, OSError):
    """A binary file does not follow the expected layout."""
