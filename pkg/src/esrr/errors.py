"""Exception types raised by the library."""


class EsrrError(Exception):
    """Base class for all library errors."""


class KernelValidationError(EsrrError):
    """Analytic kernel derivatives disagree with finite differences."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class FamilyMismatchError(EsrrError):
    """An atom variant does not belong to the problem family."""


class TooManyAtomsError(EsrrError):
    pass


class NoConvergenceError(EsrrError):
    """An inner iterative routine hit its iteration cap."""


class SolverFailedError(EsrrError):
    pass


class InfeasibleSourceError(EsrrError):
    """No dual vector interpolates the support: the source condition fails."""


class GridInsufficientError(EsrrError):
    """Sampled dual constraints stayed violated after all refinements."""

    def __init__(self, message, margin=None):
        super().__init__(message)
        self.margin = margin


class DegenerateDirectionsError(EsrrError):
    pass


class ConfigError(EsrrError):
    """Invalid experiment configuration; ``line`` points into the JSON source."""

    def __init__(self, message, line=None, path=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
        self.path = path
