"""Exception types shared by the library and mapped to CLI exit codes."""


class LabError(Exception):
    """Base class for every error raised by the library."""


class PreconditionError(LabError, ValueError):
    pass


class NumericalError(LabError, ArithmeticError):
    pass


class NonConvergenceError(NumericalError):
    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class SingularSpectrumError(NumericalError):
    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class TruncationLeakError(PreconditionError):
    def __init__(self, message, tail_mass=None):
        super().__init__(message)
        self.tail_mass = tail_mass


class QuadratureAccuracyError(NumericalError):
    def __init__(self, message, tail_estimate=None, residue=None):
        super().__init__(message)
        self.tail_estimate = tail_estimate
        self.residue = residue


class UnsupportedModelError(LabError, ValueError):
    pass


class ConfigError(LabError, ValueError):
    def __init__(self, message, line=None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line
