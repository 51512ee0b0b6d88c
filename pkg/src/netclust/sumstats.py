"""Second-order summaries on the network and amenity composition profiles.

Includes the inhomogeneous space-time K-function with shortest-path
distances, global envelope tests against homogeneous Poisson noise, a
cross-type pair correlation function, Scott's bandwidth rule, and
inverse-frequency amenity mixes around cluster centers.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from ._validation import as_float_array, as_generator, check_int, check_positive
from .errors import DegeneratePointsError, InputError
from .network import EventSet, LinearNetwork, equidistant_counts
from .sim import sim_poisson

__all__ = [
    "KSurface",
    "EnvelopeResult",
    "PcfCurve",
    "AmenityMixTable",
    "scott_bandwidth",
    "kfunction",
    "envelope_pvalue",
    "multitype_pcf",
    "amenity_mix",
]


def scott_bandwidth(points, n: int | None = None) -> float:
    """Scott's rule: mean per-coordinate std times n^(-1/(d+4)).

    `points` is (n,) or (n, d).  Raises DegeneratePointsError when any
    coordinate has zero spread.
    """
    arr = as_float_array(points, "points")
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or len(arr) < 2:
        raise InputError(f"points must be (n>=2, d), got shape {arr.shape}")
    if n is None:
        n = len(arr)
    d = arr.shape[1]
    sig = arr.std(axis=0, ddof=1)
    if np.any(sig <= 0):
        raise DegeneratePointsError("zero variance coordinate; bandwidth undefined")
    return float(sig.mean() * n ** (-1.0 / (d + 4)))


def _check_grid(grid: np.ndarray, name: str, positive: bool = True) -> np.ndarray:
    grid = as_float_array(grid, name, ndim=1, allow_empty=False)
    if np.any(np.diff(grid) <= 0):
        raise InputError(f"{name} must be strictly increasing")
    if positive and grid[0] <= 0:
        raise InputError(f"{name} values must be > 0")
    return grid


@dataclass(frozen=True, eq=False)
class KSurface:
    """Space-time K-function estimates on an (r, t) grid."""
    r: np.ndarray
    t: np.ndarray
    K: np.ndarray  # (len(r), len(t)), nondecreasing in both axes
    n_events: int
    intensity_mode: str


def kfunction(events: EventSet, net: LinearNetwork, r_grid, t_grid,
              intensity=None) -> KSurface:
    """Inhomogeneous space-time K-function with network distances.

    Averages, over events u, the sum over other events x of
    1{0 < d_net(u,x) < r} 1{|t_u - t_x| < t} / (lambda(x) M(u, d_net(u,x)))
    where M counts the network locations exactly d_net(u, x) away from u.
    With intensity None a homogeneous plug-in n / |L| is used (the period has
    unit length).
    """
    r_grid = _check_grid(np.asarray(r_grid, dtype=float), "r_grid")
    t_grid = _check_grid(np.asarray(t_grid, dtype=float), "t_grid")
    n = len(events)
    mode = "plugin"
    if intensity is None:
        lam = np.full(n, n / net.total_length)
        mode = "constant"
    else:
        lam = as_float_array(intensity, "intensity", ndim=1)
        if len(lam) != n:
            raise InputError("intensity must have one value per event")
        if np.any(lam <= 0):
            raise InputError("intensity must be strictly positive at all events")
    K = np.zeros((len(r_grid), len(t_grid)))
    if n < 2:
        return KSurface(r_grid, t_grid, K, n, mode)

    D = net.pairwise_distances(events)
    np.fill_diagonal(D, np.inf)  # exclude self-pairs
    dt = np.abs(events.t[:, None] - events.t[None, :])
    M = equidistant_counts(net, events, D)
    valid = np.isfinite(D) & (D > 0)  # also drops coincident pairs per the 0 < d condition
    w = np.zeros_like(D)
    w[valid] = 1.0 / (np.broadcast_to(lam[None, :], D.shape)[valid] * M[valid])

    # strict inequalities: pair (u, x) contributes to nodes with r > d, t > dt
    ir = np.searchsorted(r_grid, D[valid], side="right")
    it = np.searchsorted(t_grid, dt[valid], side="right")
    hist = np.zeros((len(r_grid) + 1, len(t_grid) + 1))
    np.add.at(hist, (ir, it), w[valid])
    K = hist[:len(r_grid), :len(t_grid)].cumsum(axis=0).cumsum(axis=1) / n
    return KSurface(r_grid, t_grid, K, n, mode)


@dataclass(frozen=True, eq=False)
class EnvelopeResult:
    """Global envelope test of the observed K surface against CSR."""
    surface: KSurface
    env_lo: np.ndarray
    env_hi: np.ndarray
    t_obs: float
    t_sims: np.ndarray
    p_value: float
    n_excluded: int   # grid nodes with zero pooled variance, left out of T


def envelope_pvalue(events: EventSet, net: LinearNetwork, r_grid, t_grid,
                    m: int = 99, rng=None) -> EnvelopeResult:
    """Monte Carlo envelope test against same-count homogeneous Poisson noise.

    The summary statistic integrates the standardized K deviation over the
    grid; mean and variance are pooled over all m + 1 surfaces (observed
    included) so the ranks are exchangeable under the null.  The p-value is
    (1 + #{T_sim > T_obs}) / (m + 1).
    """
    m = check_int(m, "m", minimum=1)
    rng = as_generator(rng)
    r_grid = _check_grid(np.asarray(r_grid, dtype=float), "r_grid")
    t_grid = _check_grid(np.asarray(t_grid, dtype=float), "t_grid")
    dr = np.diff(r_grid)
    dtg = np.diff(t_grid)
    if (np.any(np.abs(dr - dr[0]) > 1e-9 * dr[0]) or
            np.any(np.abs(dtg - dtg[0]) > 1e-9 * dtg[0])):
        raise InputError("envelope test requires uniformly spaced grids")
    cell = float(dr[0] * dtg[0])

    obs = kfunction(events, net, r_grid, t_grid)
    sims = np.empty((m,) + obs.K.shape)
    for s in range(m):
        pattern = sim_poisson(net, n=len(events), rng=rng)
        sims[s] = kfunction(pattern, net, r_grid, t_grid).K

    stack = np.concatenate([obs.K[None], sims], axis=0)  # (m+1, R, T)
    mean = stack.mean(axis=0)
    var = stack.var(axis=0, ddof=1)
    valid = var > 0
    n_excluded = int((~valid).sum())

    def t_stat(K):
        dev = np.zeros_like(K)
        dev[valid] = (K[valid] - mean[valid]) / np.sqrt(var[valid])
        return float(dev.sum() * cell)

    t_obs = t_stat(obs.K)
    t_sims = np.array([t_stat(sims[s]) for s in range(m)])
    p = (1.0 + float((t_sims > t_obs).sum())) / (m + 1.0)
    return EnvelopeResult(obs, sims.min(axis=0), sims.max(axis=0),
                          t_obs, t_sims, p, n_excluded)


@dataclass(frozen=True, eq=False)
class PcfCurve:
    r: np.ndarray
    g: np.ndarray
    bandwidth: float
    n_pairs: int


def multitype_pcf(events1: EventSet, events2: EventSet, net: LinearNetwork,
                  r_grid, h: float | None = None,
                  intensity1=None, intensity2=None) -> PcfCurve:
    """Cross-type pair correlation function over network distance.

    Gaussian-smooths the cross-pattern distance spectrum:
      g(r) = (1/|L|) sum_ij phi_h(r - d_ij) / (lam1_i lam2_j M_ij)
    with M_ij the equidistant-location count, symmetrized by averaging the
    counts seen from both endpoints so the estimator is exactly symmetric in
    its two patterns.  Bandwidth defaults to Scott's rule on the distances.
    Values near 1 indicate no cross-type interaction.
    """
    r_grid = _check_grid(np.asarray(r_grid, dtype=float), "r_grid")
    n1, n2 = len(events1), len(events2)
    if n1 == 0 or n2 == 0:
        raise InputError("both patterns must be non-empty")
    lam1 = np.full(n1, n1 / net.total_length) if intensity1 is None else \
        as_float_array(intensity1, "intensity1", ndim=1)
    lam2 = np.full(n2, n2 / net.total_length) if intensity2 is None else \
        as_float_array(intensity2, "intensity2", ndim=1)
    if np.any(lam1 <= 0) or np.any(lam2 <= 0):
        raise InputError("intensities must be strictly positive")

    D = net.pairwise_distances(events1, events2)     # (n1, n2)
    M1 = equidistant_counts(net, events1, D)
    M2 = equidistant_counts(net, events2, np.ascontiguousarray(D.T)).T
    Msym = 0.5 * (M1 + M2)
    finite = np.isfinite(D)
    if not finite.any():
        raise InputError("patterns share no connected component")
    d_flat = D[finite]
    w_flat = 1.0 / ((lam1[:, None] * lam2[None, :])[finite] * Msym[finite])
    if h is None:
        h = scott_bandwidth(d_flat)
    check_positive(h, "h")

    norm = 1.0 / (np.sqrt(2.0 * np.pi) * h)
    g = np.empty(len(r_grid))
    for k, r in enumerate(r_grid):
        z = (r - d_flat) / h
        g[k] = float((w_flat * np.exp(-0.5 * z * z)).sum()) * norm / net.total_length
    return PcfCurve(r_grid, g, float(h), int(finite.sum()))


@dataclass(frozen=True, eq=False)
class AmenityMixTable:
    """Per-cluster weighted amenity composition."""
    categories: tuple[str, ...]
    counts: np.ndarray        # (k, n_cat) raw in-radius counts
    weights: np.ndarray       # (n_cat,) inverse-frequency weights
    proportions: np.ndarray   # (k, n_cat) rows sum to 1 (or all-zero if empty)
    empty: np.ndarray         # (k,) True when no amenity is in range

    def rows(self):
        for j in range(len(self.proportions)):
            for c, cat in enumerate(self.categories):
                yield j, cat, float(self.proportions[j, c])


def amenity_mix(centers_xy, amenities_xy, categories, radius: float) -> AmenityMixTable:
    """Inverse-frequency weighted amenity shares within a planar radius.

    Every category's in-radius count is weighted by
    (total amenities) / (total of that category), computed over the whole
    amenity table, then shares are normalized per center.  Duplicating the
    amenity table leaves the shares unchanged.
    """
    centers_xy = as_float_array(centers_xy, "centers_xy", ndim=2)
    amenities_xy = as_float_array(amenities_xy, "amenities_xy", ndim=2)
    check_positive(radius, "radius")
    categories = np.asarray(categories, dtype=object)
    if len(categories) != len(amenities_xy):
        raise InputError("categories must align with amenity coordinates")
    if len(amenities_xy) == 0:
        raise InputError("amenity table is empty")

    cats = tuple(sorted(set(categories.tolist())))
    cat_idx = {c: k for k, c in enumerate(cats)}
    col = np.array([cat_idx[c] for c in categories.tolist()], dtype=np.int64)
    totals = np.bincount(col, minlength=len(cats)).astype(float)
    weights = len(amenities_xy) / totals

    within = cdist(centers_xy, amenities_xy) <= radius  # (k, n_amen)
    counts = np.zeros((len(centers_xy), len(cats)))
    for j in range(len(centers_xy)):
        counts[j] = np.bincount(col[within[j]], minlength=len(cats))
    weighted = counts * weights[None, :]
    row_sum = weighted.sum(axis=1)
    empty = row_sum == 0
    props = np.zeros_like(weighted)
    pos = ~empty
    props[pos] = weighted[pos] / row_sum[pos, None]
    return AmenityMixTable(cats, counts, weights, props, empty)
