# coding=utf-8
"""Exceptions raised by pathdiff."""


class PathDiffError(Exception):
    """Base class of every error raised by this package."""


class SingularMatrix(PathDiffError, ArithmeticError):
    def __init__(self, message, rcond=0.0):
        super(SingularMatrix, self).__init__(message)
        self.rcond = rcond


class NotSymmetric(PathDiffError, ValueError):
    pass


class NonFiniteError(PathDiffError, ValueError):
    pass


class DomainError(PathDiffError, ValueError):
    """A primitive was evaluated outside of its domain (log of a nonpositive number, ...)."""


class NoConvergence(PathDiffError, RuntimeError):
    def __init__(self, message, iterations=None, residual=None):
        super(NoConvergence, self).__init__(message)
        self.iterations = iterations
        self.residual = residual


class InvertibilityFailure(PathDiffError, ArithmeticError):
    """The variable block of a Jacobian selection failed the invertibility gate.

    ``rcond`` is the reciprocal condition estimate and ``witness`` the offending matrix.
    """
    def __init__(self, message, rcond=0.0, witness=None, point=None):
        super(InvertibilityFailure, self).__init__(message)
        self.rcond = rcond
        self.witness = witness
        self.point = point


class InvalidSelection(PathDiffError, ValueError):
    pass


class DivergenceDetected(PathDiffError, RuntimeError):
    def __init__(self, message, step=None, norm=None):
        super(DivergenceDetected, self).__init__(message)
        self.step = step
        self.norm = norm


class NotMonotone(PathDiffError, ValueError):
    pass


class ConfigError(PathDiffError, ValueError):
    pass
