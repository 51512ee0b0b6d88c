"""Space and time kernels with Monte Carlo network correction.

The spatial kernel is a planar Gaussian evaluated at Euclidean displacement,
divided by its line integral over the network so it integrates to one along
the network.  The line integral is approximated once per run by averaging the
raw kernel over a fixed uniform point set on the network:

    correction(c) ~= (|L| / N) * sum_k kappa(v_k; c, w_s)

The temporal kernel is a plain Gaussian density on normalized time; its mass
outside [0, 1] is intentionally not renormalized, so densities near the
period edges are attenuated.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

from ._validation import as_generator, check_int, check_positive
from .errors import IsolatedCenterError
from .network import LinearNetwork, NetPoint, NetPointSet, sample_uniform

__all__ = [
    "KernelConfig",
    "planar_gaussian",
    "temporal_kernel",
    "correction_term",
    "spatial_kernel",
    "log_corrections",
    "log_spatial_matrix",
    "log_temporal_matrix",
]

LOG_TWO_PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True, eq=False)
class KernelConfig:
    """Frozen Monte Carlo point set used for every correction in one run."""
    mc_points: NetPointSet
    mc_seed: int
    total_length: float

    @classmethod
    def draw(cls, net: LinearNetwork, n_points: int = 1000, seed: int = 0) -> "KernelConfig":
        n_points = check_int(n_points, "n_points", minimum=1)
        pts = sample_uniform(net, n_points, as_generator(seed))
        return cls(pts, int(seed), net.total_length)

    @property
    def n_points(self) -> int:
        return len(self.mc_points)


def _as_xy(c) -> np.ndarray:
    if isinstance(c, NetPoint):
        return np.array([[c.x, c.y]])
    arr = np.asarray(c, dtype=float)
    return arr.reshape(1, 2) if arr.ndim == 1 else arr


def planar_gaussian(x, c, w: float) -> np.ndarray | float:
    """Bivariate isotropic Gaussian density at displacement x - c."""
    check_positive(w, "w")
    x = _as_xy(x)
    cc = _as_xy(c)
    d2 = cdist(x, cc, "sqeuclidean")
    val = np.exp(-d2 / (2.0 * w * w)) / (2.0 * np.pi * w * w)
    return float(val[0, 0]) if val.size == 1 else val


def temporal_kernel(t, c_t, w_t: float) -> np.ndarray | float:
    """Gaussian density in normalized time (no [0, 1] renormalization)."""
    check_positive(w_t, "w_t")
    t = np.asarray(t, dtype=float)
    dt = t - c_t
    val = np.exp(-dt * dt / (2.0 * w_t * w_t)) / (np.sqrt(2.0 * np.pi) * w_t)
    return float(val) if np.isscalar(c_t) and val.ndim == 0 else val


def log_corrections(cfg: KernelConfig, centers_xy: np.ndarray, w_s: float) -> np.ndarray:
    """Log of the MC line-integral correction for each center, shape (M,)."""
    centers_xy = _as_xy(centers_xy)
    d2 = cdist(cfg.mc_points.xy, centers_xy, "sqeuclidean")  # (N, M)
    logk = -LOG_TWO_PI - 2.0 * np.log(w_s) - d2 / (2.0 * w_s * w_s)
    return logsumexp(logk, axis=0) + np.log(cfg.total_length / cfg.n_points)


def correction_term(cfg: KernelConfig, c, w_s: float) -> float:
    """MC estimate of the kernel's line integral over the network.

    Raises IsolatedCenterError when the estimate underflows to the order of
    machine epsilon (center effectively disconnected from the point set).
    """
    check_positive(w_s, "w_s")
    val = float(np.exp(log_corrections(cfg, c, w_s)[0]))
    if not np.isfinite(val) or val <= np.finfo(float).eps:
        raise IsolatedCenterError(
            f"correction underflow for center {c} at w_s={w_s}; "
            "no Monte Carlo point carries kernel mass")
    return val


def spatial_kernel(cfg: KernelConfig, x, c, w_s: float) -> np.ndarray | float:
    """Network-corrected planar Gaussian: kappa(x; c, w_s) / correction(c)."""
    corr = correction_term(cfg, c, w_s)
    return planar_gaussian(x, c, w_s) / corr


def log_spatial_matrix(cfg: KernelConfig, xy: np.ndarray, centers_xy: np.ndarray,
                       w_s: float, log_corr: np.ndarray | None = None) -> np.ndarray:
    """Log corrected spatial kernel, shape (n_points, n_centers)."""
    if log_corr is None:
        log_corr = log_corrections(cfg, centers_xy, w_s)
    d2 = cdist(np.asarray(xy, dtype=float), _as_xy(centers_xy), "sqeuclidean")
    logk = -LOG_TWO_PI - 2.0 * np.log(w_s) - d2 / (2.0 * w_s * w_s)
    return logk - log_corr[None, :]


def log_temporal_matrix(t: np.ndarray, centers_t: np.ndarray, w_t: float) -> np.ndarray:
    """Log Gaussian time kernel, shape (n_points, n_centers)."""
    dt = np.asarray(t, dtype=float)[:, None] - np.asarray(centers_t, dtype=float)[None, :]
    with np.errstate(over="ignore"):  # exponent overflow saturates to -inf
        return -0.5 * LOG_TWO_PI - np.log(w_t) - dt * dt / (2.0 * w_t * w_t)
