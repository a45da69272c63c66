"""Generalised Brownian bridges: sampling, kernels, Cameron-Martin and equivalence diagnostics."""

__version__ = "0.1.0"

from .drift_kernels import DriftFamily, KernelValue  # noqa: E402
from .errors import (  # noqa: E402
    ConfigurationError,
    ContractViolation,
    DomainError,
    GenbridgeError,
    NumericalFailure,
    OracleFailure,
)
from .grid import GridFunction, TimeGrid, make_grid  # noqa: E402
from .path_sampler import PathEnsemble  # noqa: E402
from .reports import DiagnosticsReport, TrendReport  # noqa: E402

__all__ = [
    "ConfigurationError", "ContractViolation", "DiagnosticsReport", "DomainError",
    "DriftFamily", "GenbridgeError", "GridFunction", "KernelValue", "NumericalFailure",
    "OracleFailure", "PathEnsemble", "TimeGrid", "TrendReport", "make_grid", "__version__",
]
