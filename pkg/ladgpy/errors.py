# -*- coding: utf-8 -*-

"""errors.py
Desc: Exceptions raised by ladgpy
"""


class LadgError(Exception):
    """Base class for every error raised by the package"""


class ShapeError(LadgError, ValueError):
    """Operand dimensions do not agree"""


class NumericalDomainError(LadgError, ArithmeticError):
    """Input lies outside the domain of a numerical routine (non-SPD,
    singular, non-finite)"""

    def __init__(self, message: str, pivot: int | None = None) -> None:
        super().__init__(message)
        self.pivot: int | None = pivot


class DegenerateInputError(LadgError, ValueError):
    """Input is well-formed but degenerate, e.g. a zero-norm feature row"""


class EmptySplitError(DegenerateInputError):
    """A dataset split has no rows"""


class ConvergenceError(LadgError, RuntimeError):
    """An iterative routine ran out of steps"""

    def __init__(self, message: str, residual: float, steps: int) -> None:
        super().__init__(message)
        self.residual: float = residual
        self.steps: int = steps


class StateError(LadgError, RuntimeError):
    """Object used before it was initialized"""


class ConfigurationError(LadgError, ValueError):
    """One or more configuration values are invalid"""

    def __init__(self, problems: list[str] | str) -> None:
        if isinstance(problems, str):
            problems = [problems]
        super().__init__("; ".join(problems))
        self.problems: list[str] = list(problems)


class DataParseError(LadgError, ValueError):
    """A data file row could not be parsed"""

    def __init__(self, message: str, line: int) -> None:
        super().__init__(f"line {line}: {message}")
        self.line: int = line


class SchemaError(LadgError, ValueError):
    """A data file does not follow the expected column layout"""


class CheckpointMismatchError(LadgError, ValueError):
    """Checkpoint does not fit the dataset it is applied to"""


class TrainingError(LadgError, RuntimeError):
    """A training step failed; carries the step and phase"""

    def __init__(self, message: str, step: int, phase: str) -> None:
        super().__init__(f"step {step} ({phase}): {message}")
        self.step: int = step
        self.phase: str = phase
