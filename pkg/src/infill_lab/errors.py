"""
Exception hierarchy for the infilling laboratory.

Every error raised on purpose by the library derives from LabError, and also
from the builtin exception a caller would naturally expect (ValueError for bad
arguments, RuntimeError for failures while running).
"""


class LabError(Exception):
    """Base class for all laboratory errors."""


class DomainError(LabError, ValueError):
    """A numeric argument lies outside the domain of a function."""


class SequenceLengthError(LabError, ValueError):
    """A sequence is longer than the model or sampler allows."""


class ContractError(LabError, ValueError):
    """A precondition of an operation is violated."""


class UndefinedLossError(LabError, ValueError):
    """A loss was requested over an empty set of masked positions."""


class ConfigError(LabError, ValueError):
    """A configuration value is invalid."""


class AssemblyError(LabError, ValueError):
    """A prompt template could not be filled with the given slot values."""


class UndefinedMetricError(LabError, ValueError):
    """A metric is undefined for the given inputs (e.g. zero variance)."""


class PipelineError(LabError, RuntimeError):
    """The prompt-infilling pipeline cannot proceed."""


class TrainingDivergedError(LabError, RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, message: str, record=None):
        super().__init__(message)
        self.record = record


class DataError(LabError, RuntimeError):
    """An input file is missing, unreadable or malformed."""


class CheckpointError(LabError, RuntimeError):
    """A checkpoint could not be written or read."""
