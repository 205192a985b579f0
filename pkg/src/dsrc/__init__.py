"""Static and dynamic MEG source estimation.

Minimum-norm estimation, Kalman filtering and fixed-interval smoothing on a
spherical-head forward model, with a reproducible simulation sweep.
"""
__version__ = "0.1.0"

from .errors import (ConfigError, ContractError, CorruptError, DsrcError, NotSpdError,
                     NumericalError, SolverFailure)

__all__ = [
    "__version__",
    "ConfigError",
    "ContractError",
    "CorruptError",
    "DsrcError",
    "NotSpdError",
    "NumericalError",
    "SolverFailure",
]
