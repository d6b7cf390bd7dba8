"""Exception taxonomy shared by the signflip modules."""


class SignflipError(Exception):
    """Base class for all package-specific errors."""


class ForbiddenContrastError(SignflipError, ValueError):
    """Contrast ratio sigma_minus/sigma_plus equals -1, which the model rejects."""


class NonCriticalContrastError(SignflipError, ValueError):
    """Operation requires a contrast inside the critical interval (-1, -1/3)."""


class MeshFormatError(SignflipError, ValueError):
    """Malformed mesh text; carries the 1-based line number of the offence."""

    def __init__(self, lineno, message):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}")


class MeshInvariantError(SignflipError, ValueError):
    """Mesh violates a structural invariant (orientation, conformity, region purity)."""


class AssemblyError(SignflipError, RuntimeError):
    """Finite-element assembly failed (degenerate triangle, size mismatch)."""


class SolverError(SignflipError, RuntimeError):
    """Eigen or linear solver failed; may carry the best residuals seen."""

    def __init__(self, message, best_residuals=None):
        self.best_residuals = best_residuals
        super().__init__(message)


class SingularSystemError(SolverError):
    """Linear system is numerically singular (delta sits at an injectivity loss)."""


class FactorizationBreakdown(SolverError):
    """Banded LDL^T factorization could not select a usable pivot."""


class SweepError(SolverError):
    """A delta sweep aborted; carries partial results and the failing delta."""

    def __init__(self, message, failing_delta, partial):
        self.failing_delta = failing_delta
        self.partial = partial
        super().__init__(message)
