"""Exception hierarchy shared by all modules."""


class NlcertError(Exception):
    """Base class for all package errors."""


class ParseError(NlcertError):
    """Syntax or semantic error in a problem source, with position."""

    def __init__(self, message, line=None, col=None):
        self.line = line
        self.col = col
        where = f" (line {line}, col {col})" if line is not None else ""
        super().__init__(f"{message}{where}")


class DomainError(NlcertError):
    """An operation was applied outside its domain (log of <= 0, 1/0, ...)."""

    def __init__(self, message, path=None):
        self.path = path
        suffix = f" at node path {path}" if path is not None else ""
        super().__init__(f"{message}{suffix}")


class NonDifferentiableError(NlcertError):
    """Differentiation crossed an abs/min/max node."""


class OrderError(NlcertError):
    """Relaxation order below the minimal admissible order k0."""


class SolverError(NlcertError):
    """The SDP solver did not return a usable solution."""

    def __init__(self, message, solution=None):
        self.solution = solution
        super().__init__(message)


class CertificateError(NlcertError):
    """A certificate failed verification; `check` names the failing test."""

    def __init__(self, message, check=None):
        self.check = check
        super().__init__(message)


class ConvergenceError(NlcertError):
    """An iterative approximation (e.g. the Remez exchange) did not converge."""
