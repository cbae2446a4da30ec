"""Exception hierarchy shared by the solver modules."""


class MfgcError(Exception):
    """Base class for every error raised by this package."""


class DominanceViolation(MfgcError, ValueError):
    pass


class CflViolation(MfgcError):
    pass


class NoConvergence(MfgcError):
    """An iteration stopped without meeting its tolerance.

    ``report`` carries whatever diagnostic object the raising routine had
    at hand (an iteration report, a residual history, ...).
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class UnsupportedVariant(MfgcError, NotImplementedError):
    pass


class DegenerateKernel(MfgcError, ValueError):
    pass


class MissingConstants(MfgcError, ValueError):
    pass


class DomainError(MfgcError, ValueError):
    pass


class ConfigError(MfgcError, ValueError):
    pass
