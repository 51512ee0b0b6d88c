"""Small input-validation helpers used by the public API."""
from __future__ import annotations

import numbers

import numpy as np

from .errors import InputError


def as_generator(seed) -> np.random.Generator:
    """Coerce None / int / SeedSequence / Generator into a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def as_float_array(x, name: str, ndim: int | None = None, allow_empty: bool = True) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if ndim is not None and arr.ndim != ndim:
        raise InputError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not allow_empty and arr.size == 0:
        raise InputError(f"{name} must not be empty")
    if not np.all(np.isfinite(arr)):
        bad = int(np.flatnonzero(~np.isfinite(arr).reshape(-1))[0])
        raise InputError(f"{name} contains a non-finite value (flat index {bad})")
    return arr


def check_positive(value, name: str, strict: bool = True) -> float:
    if not isinstance(value, numbers.Real) or not np.isfinite(value):
        raise InputError(f"{name} must be a finite number, got {value!r}")
    if strict and value <= 0:
        raise InputError(f"{name} must be > 0, got {value}")
    if not strict and value < 0:
        raise InputError(f"{name} must be >= 0, got {value}")
    return float(value)


def check_in_range(value, name: str, lo: float, hi: float,
                   inclusive: tuple[bool, bool] = (True, True)) -> float:
    value = float(value)
    lo_ok = value >= lo if inclusive[0] else value > lo
    hi_ok = value <= hi if inclusive[1] else value < hi
    if not (np.isfinite(value) and lo_ok and hi_ok):
        lb = "[" if inclusive[0] else "("
        rb = "]" if inclusive[1] else ")"
        raise InputError(f"{name} must lie in {lb}{lo}, {hi}{rb}, got {value}")
    return value


def check_int(value, name: str, minimum: int | None = None) -> int:
    if not isinstance(value, numbers.Integral):
        raise InputError(f"{name} must be an integer, got {value!r}")
    value = int(value)
    if minimum is not None and value < minimum:
        raise InputError(f"{name} must be >= {minimum}, got {value}")
    return value
