"""Forward simulators: uniform network noise and mixture-driven clusters."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from ._validation import as_float_array, as_generator, check_int, check_positive
from .errors import InputError, NumericalError
from .network import EventSet, LinearNetwork, NetPointSet, sample_uniform

__all__ = ["SyntheticTruth", "sim_poisson", "sim_mixture"]

logger = logging.getLogger(__name__)

# a rejection sampler this inefficient indicates a mis-scaled bandwidth
MIN_ACCEPT_RATE = 1e-4


@dataclass(frozen=True, eq=False)
class SyntheticTruth:
    """Ground truth for a simulated clustered pattern."""
    events: EventSet
    memberships: np.ndarray       # (n,) int cluster per event
    centers: NetPointSet
    center_times: np.ndarray      # (k,)
    w_s: float
    w_t: float
    weights: np.ndarray           # (k,) mixture weights
    time_truncated: bool
    outside_mass: np.ndarray      # (k,) prior Gaussian time mass outside [0, 1]


def sim_poisson(net: LinearNetwork, n: int | None = None,
                rate: float | None = None, rng=None) -> EventSet:
    """Homogeneous noise: n fixed, or n ~ Poisson(rate * |L|); times U(0, 1)."""
    rng = as_generator(rng)
    if (n is None) == (rate is None):
        raise InputError("pass exactly one of n or rate")
    if n is None:
        check_positive(rate, "rate")
        n = max(int(rng.poisson(rate * net.total_length)), 1)
    n = check_int(n, "n", minimum=1)
    pts = sample_uniform(net, n, rng)
    t = rng.uniform(0.0, 1.0, size=n)
    return EventSet.from_points(pts, t)


def _rejection_spatial(net: LinearNetwork, center_xy: np.ndarray, w_s: float,
                       n: int, rng) -> NetPointSet:
    """Sample n points on the network with density prop. to the planar kernel.

    Uniform-on-network proposals accepted with exp(-d^2 / (2 w_s^2)) where d
    is Euclidean distance to the center; the result follows the corrected
    spatial kernel exactly.
    """
    seg = np.empty(n, dtype=np.int64)
    off = np.empty(n)
    got, proposed, accepted = 0, 0, 0
    batch = max(4 * n, 256)
    while got < n:
        cand = sample_uniform(net, batch, rng)
        d2 = ((cand.xy - center_xy[None, :]) ** 2).sum(axis=1)
        keep = rng.uniform(size=batch) < np.exp(-d2 / (2.0 * w_s * w_s))
        take = min(int(keep.sum()), n - got)
        idx = np.flatnonzero(keep)[:take]
        seg[got:got + take] = cand.seg[idx]
        off[got:got + take] = cand.offset[idx]
        got += take
        proposed += batch
        accepted += int(keep.sum())
        if proposed >= 10000 and accepted / proposed < MIN_ACCEPT_RATE:
            raise NumericalError(
                f"spatial rejection acceptance {accepted / proposed:.2e} "
                f"below {MIN_ACCEPT_RATE}; w_s={w_s} is too small for this network")
    return net.points_from_arrays(seg, off)


def _truncated_time(center_t: float, w_t: float, n: int, rng) -> np.ndarray:
    """Gaussian times resampled until inside [0, 1]."""
    t = rng.normal(center_t, w_t, size=n)
    bad = (t < 0.0) | (t > 1.0)
    tries = 0
    while np.any(bad):
        t[bad] = rng.normal(center_t, w_t, size=int(bad.sum()))
        bad = (t < 0.0) | (t > 1.0)
        tries += 1
        if tries > 10000:
            raise NumericalError(f"time truncation stuck for center_t={center_t}, w_t={w_t}")
    return t


def sim_mixture(net: LinearNetwork, centers: NetPointSet, center_times,
                w_s: float, w_t: float, weights, n: int, rng=None,
                memberships: np.ndarray | None = None,
                truncate_time: bool = True) -> SyntheticTruth:
    """Draw a clustered space-time pattern from the mixture forward model.

    Cluster per event ~ Categorical(weights) unless `memberships` is given;
    location by rejection around the cluster center; time Gaussian around the
    center time, resampled into [0, 1] when truncate_time (the inference
    model evaluates the untruncated density, so the per-center mass lost to
    truncation is reported in the result and logged).
    """
    rng = as_generator(rng)
    check_positive(w_s, "w_s")
    check_positive(w_t, "w_t")
    n = check_int(n, "n", minimum=1)
    center_times = as_float_array(center_times, "center_times", ndim=1)
    weights = as_float_array(weights, "weights", ndim=1)
    if len(centers) != len(center_times) or len(centers) != len(weights):
        raise InputError("centers, center_times and weights must have equal lengths")
    if np.any(weights < 0) or weights.sum() <= 0:
        raise InputError("weights must be nonnegative with positive sum")
    weights = weights / weights.sum()

    if memberships is None:
        memberships = rng.choice(len(centers), size=n, p=weights)
    else:
        memberships = np.asarray(memberships, dtype=np.int64)
        if len(memberships) != n or memberships.min() < 0 or memberships.max() >= len(centers):
            raise InputError("memberships must be (n,) indices into centers")

    seg = np.empty(n, dtype=np.int64)
    off = np.empty(n)
    t = np.empty(n)
    for j in range(len(centers)):
        idx = np.flatnonzero(memberships == j)
        if len(idx) == 0:
            continue
        pts = _rejection_spatial(net, centers.xy[j], w_s, len(idx), rng)
        seg[idx], off[idx] = pts.seg, pts.offset
        if truncate_time:
            t[idx] = _truncated_time(float(center_times[j]), w_t, len(idx), rng)
        else:
            t[idx] = rng.normal(center_times[j], w_t, size=len(idx))

    outside = 1.0 - (norm.cdf((1.0 - center_times) / w_t) - norm.cdf(-center_times / w_t))
    if truncate_time and np.any(outside > 1e-3):
        worst = float(outside.max())
        logger.info("time truncation discards up to %.3f prior mass per center", worst)

    events = EventSet.from_points(net.points_from_arrays(seg, off), t)
    return SyntheticTruth(events, memberships, centers, center_times,
                          float(w_s), float(w_t), weights, bool(truncate_time), outside)
