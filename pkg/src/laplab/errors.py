"""Exception hierarchy. CLI exit codes hang off these classes."""


class LaplabError(Exception):
    exit_code = 1


class ConfigError(LaplabError, ValueError):
    exit_code = 2


class DomainError(LaplabError, ValueError):
    """Argument outside the admissible domain of an operation."""


class AliasingError(DomainError):
    pass


class NumericalGuardError(LaplabError):
    """A numerical guard tripped (singularity, resolution, overflow)."""
    exit_code = 3


class SingularityError(NumericalGuardError):
    def __init__(self, message, t=None, min_fprime=None):
        super().__init__(message)
        self.t = t
        self.min_fprime = min_fprime


class ResolutionError(NumericalGuardError):
    def __init__(self, message, suggested_modes=None):
        super().__init__(message)
        self.suggested_modes = suggested_modes


class ConvergenceError(LaplabError):
    exit_code = 4

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual
