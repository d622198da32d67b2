"""Exception types for structure learning."""

from typing import Optional


class StructureLearningError(Exception):
    """Base class for all library errors."""


class ConfigError(StructureLearningError):
    """Invalid hyperparameters or experiment configuration."""


class FormatError(StructureLearningError):
    """Malformed CSV, JSON or edge-list input."""

    def __init__(self, message: str, source: str = "", line: Optional[int] = None):
        self.source = source
        self.line = line
        where = source
        if line is not None:
            where = f"{source}:{line}" if source else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class CycleError(StructureLearningError):
    """Edge set contains a directed cycle."""


class DimensionMismatchError(StructureLearningError):
    """Graphs or matrices over different node counts."""


class InvalidNodeError(StructureLearningError):
    """Node index out of range or used illegally."""


class LimitExceededError(StructureLearningError):
    """An enumeration or iteration cap was exceeded."""


class NotPositiveDefiniteError(StructureLearningError):
    """Covariance matrix is not symmetric positive definite."""


class RankDeficientError(StructureLearningError):
    """Design matrix is rank deficient or leaves no residual."""


class OutOfSpaceError(StructureLearningError):
    """State lies outside the degree-restricted model space."""


class NoValidMoveError(StructureLearningError):
    """No canonical move keeps the state inside the model space."""


class UnreachablePairError(StructureLearningError):
    """Target state is not a one-move neighbor of the source state."""


class NotErgodicError(StructureLearningError):
    """Transition matrix is not irreducible and aperiodic."""


class SingularSystemError(StructureLearningError):
    """Linear system for hitting times is singular."""


class UnsupportedKindError(StructureLearningError):
    """Unknown example, sampler or state-space kind."""


class InfeasibleDegreeError(StructureLearningError):
    """Degree constraints admit no graph of the requested shape."""
