"""Exception hierarchy shared by every module in the package."""


class TpoptError(Exception):
    """Base class for all package errors."""


class ParameterDomainError(TpoptError, ValueError):
    """A parameter lies outside the domain of a signal family."""


class DegenerateInputError(TpoptError, ValueError):
    """Input carries no usable signal (e.g. an all-zero image)."""


class ConfigurationError(TpoptError, ValueError):
    """Invalid configuration or structurally invalid arguments."""


class RankError(TpoptError, ValueError):
    """A fitted linear model is rank deficient."""


class RankDeficiencyError(RankError):
    """Jacobian least squares cannot be solved at an anchor."""

    def __init__(self, message, anchor=None):
        super().__init__(message)
        self.anchor = anchor


class IsolationError(TpoptError, ValueError):
    """No anchor falls inside a truncated kernel neighborhood."""


class DivergenceError(TpoptError, FloatingPointError):
    """An iterate became non-finite."""

    def __init__(self, message, layer=None):
        super().__init__(message)
        self.layer = layer


class TrainingError(TpoptError, FloatingPointError):
    """Training produced a non-finite loss."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class ContractViolation(TpoptError, ValueError):
    """Arguments do not belong together (e.g. tape from another input)."""


class EvaluationError(TpoptError, ValueError):
    """An evaluation cannot be computed from the given scores."""


class IdxParseError(TpoptError, ValueError):
    """Malformed IDX payload."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class StageDependencyError(TpoptError, FileNotFoundError):
    """A pipeline stage is missing an upstream artifact."""
