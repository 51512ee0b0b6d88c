"""Exception taxonomy shared across the package.

The CLI maps these onto process exit codes: InputError -> 2,
ConsistencyError -> 3, NumericalError -> 4.
"""


class NetclustError(Exception):
    """Base class for all package errors."""


class InputError(NetclustError):
    """Malformed or missing input (files, arrays, parameters)."""


class ConsistencyError(NetclustError):
    """Inputs that are individually valid but mutually inconsistent."""


class NumericalError(NetclustError):
    """Numerical failure (non-finite likelihood, degenerate estimates)."""


class IsolatedCenterError(NumericalError):
    """Kernel correction term is numerically zero for a center."""


class DegeneratePointsError(NumericalError):
    """A point set has zero variance where a spread estimate is needed."""
