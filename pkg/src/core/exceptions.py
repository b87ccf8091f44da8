"""
Exception hierarchy for the TSN desk toolkit
"""

from typing import Optional, Sequence


class TSNError(Exception):
    """Base class for every error raised by the toolkit"""


class ShapeError(TSNError, ValueError):
    """Raised when tensor extents do not agree"""

    def __init__(self, message: str, *shapes: Sequence[int]):
        if shapes:
            message = f"{message}: " + " vs ".join(str(tuple(s)) for s in shapes)
        super().__init__(message)
        self.shapes = tuple(tuple(s) for s in shapes)


class ConfigError(TSNError, ValueError):
    """Invalid configuration or model specification"""


class TensorFormatError(TSNError):
    """Malformed tensor file"""

    def __init__(self, field: str, message: str):
        super().__init__(f"bad tensor file ({field}): {message}")
        self.field = field


class SplitFormatError(TSNError):
    """Malformed line in a split list"""

    def __init__(self, line_number: int, line: str, reason: str):
        super().__init__(f"line {line_number}: {reason}: {line!r}")
        self.line_number = line_number


class DegenerateInputError(TSNError):
    """Input cannot support the requested estimate (e.g. too few correspondences)"""


class GenerationError(TSNError):
    """Synthetic dataset specification cannot be realized"""


class NumericalError(TSNError):
    """Non-finite values produced during training"""


class GradientError(TSNError):
    """Misuse of the autodiff graph"""

    def __init__(self, message: str, shape: Optional[Sequence[int]] = None):
        if shape is not None:
            message = f"{message} (shape {tuple(shape)})"
        super().__init__(message)


class LabelError(TSNError, ValueError):
    """Class index outside [0, C)"""
