"""Exception hierarchy shared by all mwlab modules."""


class MWLabError(Exception):
    """Base class; the CLI maps it to exit code 3."""


class ModelError(MWLabError):
    """Transition matrix is not a valid irreducible aperiodic stochastic matrix."""


class UncenteredError(MWLabError):
    pass


class NumericalDegeneracyError(MWLabError):
    pass


class IllConditionedError(MWLabError):
    pass


class PathTooShortError(MWLabError):
    pass


class DegenerateLimitError(MWLabError):
    pass


class PreconditionError(MWLabError):
    pass


class InequalityViolation(MWLabError):
    pass


class ConfigError(ValueError):
    """Invalid experiment configuration; the CLI maps it to exit code 2."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message if key is None else f"{key}: {message}")
        self.key = key
