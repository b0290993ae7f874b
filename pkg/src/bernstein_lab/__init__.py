"""Discrete Bernstein-type inequalities for Schrodinger-type operators on 1D models."""

__version__ = "0.1.0"

from .errors import (ConfigError, LabError, NonConvergenceError, NumericalError, PreconditionError,
                     QuadratureAccuracyError, SingularSpectrumError, TruncationLeakError,
                     UnsupportedModelError)

__all__ = ["ConfigError", "LabError", "NonConvergenceError", "NumericalError",
           "PreconditionError", "QuadratureAccuracyError", "SingularSpectrumError",
           "TruncationLeakError", "UnsupportedModelError", "__version__"]
