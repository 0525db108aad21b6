"""Exception hierarchy shared by the numerical modules and the CLI."""


class SoftGuideError(Exception):
    """Base class; ``exit_code`` is what the CLI returns for it."""

    exit_code = 1


class DomainError(SoftGuideError, ValueError):
    """Parameters outside the mathematical domain of an operation."""

    exit_code = 2


class KindError(SoftGuideError, TypeError):
    """Operation not defined for this profile kind (e.g. pointwise delta)."""

    exit_code = 2


class ResolutionError(SoftGuideError, ValueError):
    """Grid too coarse to resolve the potential."""

    exit_code = 2


class DimensionError(SoftGuideError, ValueError):
    """Requested more eigenpairs than the problem allows."""

    exit_code = 2


class EmptyDomainError(SoftGuideError, ValueError):
    """Masked problem with no unknowns."""

    exit_code = 2


class ConfigError(SoftGuideError, ValueError):
    """Invalid experiment configuration; ``fields`` maps field -> message."""

    exit_code = 2

    def __init__(self, fields):
        self.fields = dict(fields)
        msg = "; ".join(f"{k}: {v}" for k, v in sorted(self.fields.items()))
        super().__init__(msg)


class NonConvergenceError(SoftGuideError, RuntimeError):
    """Iterative eigensolver failed; carries the best residuals seen."""

    exit_code = 3

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class BracketError(SoftGuideError, RuntimeError):
    """Bisection endpoints do not bracket the sought transition."""

    exit_code = 4


class InconclusiveError(SoftGuideError, RuntimeError):
    """Numerical evidence too close to call (eigenvalue inside the margin band)."""

    exit_code = 4
