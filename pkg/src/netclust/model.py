"""Mixture model on the network and its blocked MCMC sampler.

Events (x_i, t_i) follow a truncated stick-breaking mixture with at most M
components.  Component j has a network location center and a time center;
the event density is the network-corrected planar Gaussian times a Gaussian
time kernel.  One sweep updates, in order:

  1. (w_s, w_t): joint random-walk MH on logs, reflected into the prior box,
     against the observed-data mixture likelihood;
  2. memberships g_i: exact categorical conditional over all M components;
  3. sticks U_j: conjugate Beta draws given membership counts (U_M fixed at 1);
  4. concentration b_u: conjugate Gamma draw given the free sticks;
  5. centers: per-component MH, uniform proposals over active pixel
     representatives and U(0, 1) times; empty components always accept.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import logsumexp

from ._validation import as_generator, check_in_range, check_int, check_positive
from .errors import InputError, NumericalError
from .kernels import KernelConfig, log_corrections, log_spatial_matrix, log_temporal_matrix
from .network import (EventSet, LinearNetwork, NetPointSet, PixelGrid, pixelate,
                      sample_uniform)

__all__ = [
    "FitConfig",
    "ModelContext",
    "ChainState",
    "PosteriorRun",
    "PointEstimate",
    "stick_breaking",
    "renormalized_weights",
    "nonempty_mask",
    "log_likelihood",
    "membership_probs",
    "update_theta",
    "update_memberships",
    "update_sticks",
    "update_concentration",
    "update_centers",
    "initialize_state",
    "sample_state_from_prior",
    "run_mcmc",
    "dahl_select",
    "point_estimate",
    "mixture_log_density",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FitConfig:
    """Sampler settings; defaults follow the package's reference analysis."""
    max_clusters: int = 20
    iterations: int = 20000
    burnin_frac: float = 0.5
    thin: int = 10
    step_log_ws: float = 0.08
    step_log_wt: float = 0.08
    concentration_rate: float = 1.0      # rate c of the Gamma(1, c) prior on b_u
    w_s_bounds: tuple[float, float] = (100.0, 1000.0)
    w_t_max: float = 1.0
    mc_points: int = 1000
    pixel_rows: int = 50
    pixel_cols: int = 50
    weight_mode: str = "renormalized"    # or "raw": untouched q_j over non-empty
    init_w_s: float = 300.0
    init_w_t: float = 0.2
    seed: int = 0

    def validate(self) -> "FitConfig":
        check_int(self.max_clusters, "max_clusters", minimum=1)
        check_int(self.iterations, "iterations", minimum=1)
        check_in_range(self.burnin_frac, "burnin_frac", 0.0, 1.0, (True, False))
        check_int(self.thin, "thin", minimum=1)
        check_positive(self.step_log_ws, "step_log_ws")
        check_positive(self.step_log_wt, "step_log_wt")
        check_positive(self.concentration_rate, "concentration_rate")
        lo, hi = self.w_s_bounds
        if not (0 < lo < hi):
            raise InputError(f"w_s_bounds must satisfy 0 < lo < hi, got {self.w_s_bounds}")
        check_positive(self.w_t_max, "w_t_max")
        check_int(self.mc_points, "mc_points", minimum=1)
        check_int(self.pixel_rows, "pixel_rows", minimum=1)
        check_int(self.pixel_cols, "pixel_cols", minimum=1)
        if self.weight_mode not in ("renormalized", "raw"):
            raise InputError(f"weight_mode must be 'renormalized' or 'raw', got {self.weight_mode!r}")
        return self


@dataclass(frozen=True, eq=False)
class ModelContext:
    """Per-run immutable bundle: data arrays, pixel grid, kernel point set."""
    net: LinearNetwork
    cfg: FitConfig
    grid: PixelGrid
    kernels: KernelConfig
    xy: np.ndarray   # (N, 2)
    t: np.ndarray    # (N,)

    @classmethod
    def build(cls, events: EventSet, net: LinearNetwork, cfg: FitConfig) -> "ModelContext":
        cfg.validate()
        if len(events) == 0:
            raise InputError("cannot fit a model with zero events")
        mc_ss = np.random.SeedSequence(cfg.seed).spawn(3)[0]
        mc_rng = np.random.default_rng(mc_ss)
        kernels = KernelConfig(sample_uniform(net, cfg.mc_points, mc_rng),
                               cfg.seed, net.total_length)
        grid = pixelate(net, cfg.pixel_rows, cfg.pixel_cols)
        if grid.n_active == 0:
            raise NumericalError("pixel grid has no active cells")
        return cls(net, cfg, grid, kernels,
                   np.array(events.xy, dtype=float), np.array(events.t, dtype=float))

    @property
    def n_events(self) -> int:
        return len(self.t)


@dataclass(frozen=True, eq=False)
class ChainState:
    """One MCMC state.  Arrays are treated as immutable; updates copy."""
    w_s: float
    w_t: float
    b_u: float
    U: np.ndarray            # (M,) sticks, last fixed at 1
    q: np.ndarray            # (M,) mixture weights from U
    g: np.ndarray            # (N,) memberships in [0, M)
    center_seg: np.ndarray   # (M,)
    center_off: np.ndarray   # (M,)
    center_xy: np.ndarray    # (M, 2)
    center_t: np.ndarray     # (M,)

    @property
    def n_clusters(self) -> int:
        return len(self.q)

    def validate(self, ctx: ModelContext) -> None:
        lo, hi = ctx.cfg.w_s_bounds
        if not (lo <= self.w_s <= hi):
            raise NumericalError(f"w_s={self.w_s} outside [{lo}, {hi}]")
        if not (0.0 < self.w_t <= ctx.cfg.w_t_max):
            raise NumericalError(f"w_t={self.w_t} outside (0, {ctx.cfg.w_t_max}]")
        if abs(self.q.sum() - 1.0) > 1e-12:
            raise NumericalError(f"stick weights sum to {self.q.sum()!r}")
        if self.g.min() < 0 or self.g.max() >= self.n_clusters:
            raise NumericalError("membership index out of range")


def stick_breaking(U, M: int | None = None) -> np.ndarray:
    """Weights q_j = U_j * prod_{m<j} (1 - U_m) with the last stick forced to 1."""
    U = np.asarray(U, dtype=float)
    if M is None:
        M = len(U)
    if len(U) != M:
        raise InputError(f"U has length {len(U)}, expected {M}")
    if np.any((U < 0) | (U > 1)):
        raise InputError("stick fractions must lie in [0, 1]")
    eff = U.copy()
    eff[-1] = 1.0  # truncation: remaining mass goes to the last component
    rest = np.concatenate([[1.0], np.cumprod(1.0 - eff[:-1])])
    return eff * rest


def nonempty_mask(g: np.ndarray, M: int) -> np.ndarray:
    return np.bincount(g, minlength=M) > 0


def renormalized_weights(q: np.ndarray, nonempty: np.ndarray) -> np.ndarray:
    """q restricted to non-empty components, renormalized to sum exactly 1."""
    w = np.where(nonempty, q, 0.0)
    s = w.sum()
    if s <= 0:
        raise NumericalError("no mixture weight on non-empty components")
    w = w / s
    for _ in range(4):  # absorb float drift into the largest weight
        drift = 1.0 - w.sum()
        if drift == 0.0:
            break
        w[np.argmax(w)] += drift
    return w


def _log_kernel_matrices(state: ChainState, ctx: ModelContext,
                         w_s: float | None = None, w_t: float | None = None):
    w_s = state.w_s if w_s is None else w_s
    w_t = state.w_t if w_t is None else w_t
    log_corr = log_corrections(ctx.kernels, state.center_xy, w_s)
    ks = log_spatial_matrix(ctx.kernels, ctx.xy, state.center_xy, w_s, log_corr)
    kt = log_temporal_matrix(ctx.t, state.center_t, w_t)
    return ks, kt


def _mixture_loglik(logw: np.ndarray, ks: np.ndarray, kt: np.ndarray) -> float:
    with np.errstate(divide="ignore"):
        per_event = logsumexp(logw[None, :] + ks + kt, axis=1)
    if np.any(np.isneginf(per_event)):
        return -np.inf
    if np.any(np.isnan(per_event)):
        raise NumericalError("NaN in per-event log likelihood")
    return math.fsum(per_event.tolist())  # order-independent total


def _log_weights(state: ChainState, ctx: ModelContext) -> np.ndarray:
    ne = nonempty_mask(state.g, state.n_clusters)
    with np.errstate(divide="ignore"):
        if ctx.cfg.weight_mode == "renormalized":
            return np.log(renormalized_weights(state.q, ne))
        return np.log(np.where(ne, state.q, 0.0))


def log_likelihood(state: ChainState, ctx: ModelContext,
                   w_s: float | None = None, w_t: float | None = None) -> float:
    """Observed-data log likelihood: sum_i log sum_{j non-empty} w_j K_S K_T.

    Non-empty means components with at least one member under the current g;
    with weight_mode 'renormalized' the q_j are rescaled to sum to 1 over
    that set, with 'raw' they are used as-is.
    """
    ks, kt = _log_kernel_matrices(state, ctx, w_s, w_t)
    return _mixture_loglik(_log_weights(state, ctx), ks, kt)


def _membership_logits(state: ChainState, ctx: ModelContext) -> np.ndarray:
    ks, kt = _log_kernel_matrices(state, ctx)
    with np.errstate(divide="ignore"):
        return np.log(state.q)[None, :] + ks + kt


def membership_probs(state: ChainState, ctx: ModelContext, i: int) -> np.ndarray:
    """Conditional membership probabilities of event i over all M components."""
    i = check_int(i, "i", minimum=0)
    if i >= ctx.n_events:
        raise InputError(f"event index {i} out of range")
    row = _membership_logits(state, ctx)[i]
    if np.all(np.isneginf(row)):
        p = (state.q > 0).astype(float)
        return p / p.sum()
    p = np.exp(row - logsumexp(row))
    return p / p.sum()


# -- reflected random walk helpers ------------------------------------------


def _fold_interval(z: float, lo: float, hi: float) -> float:
    period = 2.0 * (hi - lo)
    y = (z - lo) % period
    if y > hi - lo:
        y = period - y
    return lo + y


def _fold_upper(z: float, hi: float) -> float:
    return hi - abs(z - hi)


# -- update blocks -----------------------------------------------------------


def update_theta(state: ChainState, ctx: ModelContext, rng) -> tuple[ChainState, bool]:
    """Joint MH move on (w_s, w_t): Gaussian steps on logs, reflected into the
    prior box.  The acceptance ratio carries the log-scale Jacobian because
    the flat priors are specified on the natural scale."""
    cfg = ctx.cfg
    z = np.array([math.log(state.w_s), math.log(state.w_t)])
    zp = z + np.array([cfg.step_log_ws, cfg.step_log_wt]) * rng.standard_normal(2)
    zp[0] = _fold_interval(zp[0], math.log(cfg.w_s_bounds[0]), math.log(cfg.w_s_bounds[1]))
    zp[1] = _fold_upper(zp[1], math.log(cfg.w_t_max))
    ws_p, wt_p = math.exp(zp[0]), math.exp(zp[1])

    logw = _log_weights(state, ctx)
    cur = _mixture_loglik(logw, *_log_kernel_matrices(state, ctx))
    prop = _mixture_loglik(logw, *_log_kernel_matrices(state, ctx, ws_p, wt_p))
    log_alpha = (prop + zp.sum()) - (cur + z.sum())
    if np.isnan(log_alpha):
        return state, False
    if math.log(rng.uniform()) < log_alpha:
        return replace(state, w_s=ws_p, w_t=wt_p), True
    return state, False


def update_memberships(state: ChainState, ctx: ModelContext, rng) -> tuple[ChainState, int]:
    """Exact categorical draw of every g_i given weights, centers and ranges.

    Returns the new state and the count of degenerate events (all-kernel
    underflow rows, resampled uniformly over positive-weight components)."""
    logits = _membership_logits(state, ctx)
    degenerate = np.all(np.isneginf(logits), axis=1)
    gumbel = rng.gumbel(size=logits.shape)
    with np.errstate(invalid="ignore"):
        g = np.argmax(logits + gumbel, axis=1).astype(np.int64)
    n_deg = int(degenerate.sum())
    if n_deg:
        pos = np.flatnonzero(state.q > 0)
        g[degenerate] = pos[rng.integers(0, len(pos), size=n_deg)]
    return replace(state, g=g), n_deg


def update_sticks(state: ChainState, ctx: ModelContext, rng) -> ChainState:
    """Conjugate Beta draws: U_j ~ Beta(1 + n_j, b_u + m_j) for the free
    sticks, where m_j counts members beyond component j; the last stick
    stays at 1."""
    M = state.n_clusters
    counts = np.bincount(state.g, minlength=M)
    beyond = ctx.n_events - np.cumsum(counts)  # m_j
    U = state.U.copy()
    if M > 1:
        draws = rng.beta(1.0 + counts[:-1], state.b_u + beyond[:-1])
        U[:-1] = np.clip(draws, 1e-305, 1.0 - 1e-12)  # keep log(1-U) finite
    U[-1] = 1.0
    return replace(state, U=U, q=stick_breaking(U, M))


def update_concentration(state: ChainState, ctx: ModelContext, rng) -> ChainState:
    """Conjugate draw b_u ~ Gamma(M, c - sum_j log(1 - U_j)) over free sticks."""
    M = state.n_clusters
    rate = ctx.cfg.concentration_rate - float(np.log1p(-state.U[:-1]).sum())
    if not np.isfinite(rate) or rate <= 0:
        raise NumericalError(f"invalid Gamma rate {rate} in concentration update")
    b_u = float(rng.gamma(M, 1.0 / rate))
    if b_u <= 0 or not np.isfinite(b_u):
        raise NumericalError(f"invalid concentration draw {b_u}")
    return replace(state, b_u=b_u)


def update_centers(state: ChainState, ctx: ModelContext, rng) -> tuple[ChainState, int]:
    """Per-component MH center move.

    Proposals are uniform over the active-pixel representatives and U(0, 1)
    in time, matching the discrete uniform prior, so the ratio reduces to the
    member-product of kernels.  Empty components accept unconditionally,
    which keeps their centers mixing over the prior."""
    cfg = ctx.cfg
    reps = ctx.grid.rep_points
    seg = state.center_seg.copy()
    off = state.center_off.copy()
    cxy = state.center_xy.copy()
    ct = state.center_t.copy()
    accepted = 0
    members_of = [np.flatnonzero(state.g == j) for j in range(state.n_clusters)]
    for j in range(state.n_clusters):
        k = int(rng.integers(0, len(reps)))
        t_new = float(rng.uniform(0.0, 1.0))
        new_xy = reps.xy[k]
        idx = members_of[j]
        if len(idx) == 0:
            accept = True
        else:
            pair = np.vstack([new_xy, cxy[j]])  # proposed, current
            lc = log_corrections(ctx.kernels, pair, state.w_s)
            ks = log_spatial_matrix(ctx.kernels, ctx.xy[idx], pair, state.w_s, lc)
            kt = log_temporal_matrix(ctx.t[idx], np.array([t_new, ct[j]]), state.w_t)
            delta = float((ks[:, 0] + kt[:, 0]).sum() - (ks[:, 1] + kt[:, 1]).sum())
            if np.isnan(delta):
                accept = False
            else:
                accept = math.log(rng.uniform()) < delta
        if accept:
            seg[j] = reps.seg[k]
            off[j] = reps.offset[k]
            cxy[j] = new_xy
            ct[j] = t_new
            accepted += 1
    new = replace(state, center_seg=seg, center_off=off, center_xy=cxy, center_t=ct)
    return new, accepted


# -- initialization and prior draws ------------------------------------------


def _centers_from_prior(ctx: ModelContext, rng):
    M = ctx.cfg.max_clusters
    reps = ctx.grid.rep_points
    k = rng.integers(0, len(reps), size=M)
    t = rng.uniform(0.0, 1.0, size=M)
    return (np.array(reps.seg[k]), np.array(reps.offset[k]),
            np.array(reps.xy[k]), t)


def initialize_state(ctx: ModelContext, rng) -> ChainState:
    """Fixed-policy start: uniform memberships, prior centers, w_s = 300 m,
    w_t = 0.2 (clipped into bounds), sticks from the prior with b_u = 1."""
    cfg = ctx.cfg
    M = cfg.max_clusters
    rng = as_generator(rng)
    seg, off, cxy, ct = _centers_from_prior(ctx, rng)
    U = np.ones(M)
    if M > 1:
        U[:-1] = np.clip(rng.beta(1.0, 1.0, size=M - 1), 1e-305, 1.0 - 1e-12)
    g = rng.integers(0, M, size=ctx.n_events)
    w_s = float(np.clip(cfg.init_w_s, *cfg.w_s_bounds))
    w_t = float(min(cfg.init_w_t, cfg.w_t_max))
    return ChainState(w_s, w_t, 1.0, U, stick_breaking(U, M), g, seg, off, cxy, ct)


def sample_state_from_prior(ctx: ModelContext, rng) -> ChainState:
    """Full hierarchical prior draw (used by simulation-based checks)."""
    cfg = ctx.cfg
    M = cfg.max_clusters
    rng = as_generator(rng)
    b_u = float(rng.gamma(1.0, 1.0 / cfg.concentration_rate))
    U = np.ones(M)
    if M > 1:
        U[:-1] = np.clip(rng.beta(1.0, b_u, size=M - 1), 1e-305, 1.0 - 1e-12)
    q = stick_breaking(U, M)
    w_s = float(rng.uniform(*cfg.w_s_bounds))
    w_t = float(cfg.w_t_max * max(rng.uniform(), 1e-12))
    seg, off, cxy, ct = _centers_from_prior(ctx, rng)
    g = rng.choice(M, size=ctx.n_events, p=q / q.sum())
    return ChainState(w_s, w_t, b_u, U, q, g, seg, off, cxy, ct)


# -- driver -------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PosteriorRun:
    """Thinned retained draws plus run metadata."""
    iters: np.ndarray         # (B,) iteration numbers (1-based)
    w_s: np.ndarray
    w_t: np.ndarray
    b_u: np.ndarray
    n_nonempty: np.ndarray
    G: np.ndarray             # (B, N) memberships
    center_seg: np.ndarray    # (B, M)
    center_off: np.ndarray
    center_t: np.ndarray
    q: np.ndarray             # (B, M)
    theta_accept_rate: float
    center_accept_rate: float
    n_degenerate: int
    cfg: FitConfig
    wall_time: float

    @property
    def n_retained(self) -> int:
        return len(self.iters)


def run_mcmc(events: EventSet, net: LinearNetwork, cfg: FitConfig,
             callback=None, ctx: ModelContext | None = None) -> PosteriorRun:
    """Run the full blocked sampler and return thinned draws.

    Burn-in is floor(iterations * burnin_frac); afterwards every thin-th
    state is retained.  All randomness derives from cfg.seed.
    """
    if ctx is None:
        ctx = ModelContext.build(events, net, cfg)
    ss = np.random.SeedSequence(cfg.seed).spawn(3)
    init_rng = np.random.default_rng(ss[1])
    chain_rng = np.random.default_rng(ss[2])

    state = initialize_state(ctx, init_rng)
    ll0 = log_likelihood(state, ctx)
    if not np.isfinite(ll0):
        i_bad = _first_degenerate_event(state, ctx)
        raise NumericalError(
            f"non-finite log likelihood at initialization (first degenerate event: {i_bad})")

    burn = int(cfg.iterations * cfg.burnin_frac)
    keep_iters, snaps = [], []
    theta_acc = 0
    center_acc = 0
    n_deg = 0
    t0 = time.perf_counter()
    log_every = max(1, cfg.iterations // 10)
    for it in range(1, cfg.iterations + 1):
        state, acc = update_theta(state, ctx, chain_rng)
        theta_acc += acc
        state, deg = update_memberships(state, ctx, chain_rng)
        n_deg += deg
        state = update_sticks(state, ctx, chain_rng)
        state = update_concentration(state, ctx, chain_rng)
        state, c_acc = update_centers(state, ctx, chain_rng)
        center_acc += c_acc
        if it > burn and (it - burn) % cfg.thin == 0:
            keep_iters.append(it)
            snaps.append(state)
        if it % log_every == 0:
            logger.info("iteration %d/%d (theta acc %.2f)", it, cfg.iterations, theta_acc / it)
        if callback is not None:
            callback(it, state)
    wall = time.perf_counter() - t0

    if not snaps:
        raise InputError("no retained iterations; lower burnin_frac or thin")
    M = cfg.max_clusters
    B = len(snaps)
    run = PosteriorRun(
        iters=np.array(keep_iters, dtype=np.int64),
        w_s=np.array([s.w_s for s in snaps]),
        w_t=np.array([s.w_t for s in snaps]),
        b_u=np.array([s.b_u for s in snaps]),
        n_nonempty=np.array([int(nonempty_mask(s.g, M).sum()) for s in snaps], dtype=np.int64),
        G=np.array([s.g for s in snaps], dtype=np.int32),
        center_seg=np.array([s.center_seg for s in snaps], dtype=np.int64),
        center_off=np.array([s.center_off for s in snaps]),
        center_t=np.array([s.center_t for s in snaps]),
        q=np.array([s.q for s in snaps]),
        theta_accept_rate=theta_acc / cfg.iterations,
        center_accept_rate=center_acc / (cfg.iterations * M),
        n_degenerate=n_deg,
        cfg=cfg,
        wall_time=wall,
    )
    logger.info("run finished: %d retained draws in %.1fs", B, wall)
    return run


def _first_degenerate_event(state: ChainState, ctx: ModelContext) -> int:
    logits = _membership_logits(state, ctx)
    bad = np.flatnonzero(np.all(np.isneginf(logits), axis=1))
    return int(bad[0]) if len(bad) else -1


# -- posterior summaries -------------------------------------------------------


def dahl_select(run: PosteriorRun) -> tuple[int, np.ndarray]:
    """Least-squares partition choice over retained draws.

    Builds the pairwise co-clustering frequency matrix and returns the index
    (into the retained draws) of the first draw minimizing the squared
    deviation from it, together with that draw's membership vector.
    """
    G = run.G if isinstance(run, PosteriorRun) else np.asarray(run)
    B, N = G.shape
    freq = np.zeros((N, N))
    for b in range(B):
        freq += G[b][:, None] == G[b][None, :]
    freq /= B
    losses = np.empty(B)
    for b in range(B):
        eq = G[b][:, None] == G[b][None, :]
        losses[b] = ((eq - freq) ** 2).sum()
    best = int(np.argmin(losses))  # argmin takes the first minimizer
    return best, G[best].copy()


@dataclass(frozen=True, eq=False)
class PointEstimate:
    """Plug-in state: Dahl-selected partition with posterior-mean ranges."""
    w_s: float
    w_t: float
    center_seg: np.ndarray
    center_off: np.ndarray
    center_t: np.ndarray
    q: np.ndarray
    nonempty: np.ndarray
    labels: np.ndarray
    dahl_index: int


def point_estimate(run: PosteriorRun) -> PointEstimate:
    b, labels = dahl_select(run)
    M = run.q.shape[1]
    return PointEstimate(
        w_s=float(run.w_s.mean()),
        w_t=float(run.w_t.mean()),
        center_seg=run.center_seg[b].copy(),
        center_off=run.center_off[b].copy(),
        center_t=run.center_t[b].copy(),
        q=run.q[b].copy(),
        nonempty=nonempty_mask(labels, M),
        labels=labels,
        dahl_index=b,
    )


def mixture_log_density(net: LinearNetwork, kernels: KernelConfig,
                        est: PointEstimate, xy: np.ndarray, t: np.ndarray,
                        weight_mode: str = "renormalized") -> np.ndarray:
    """Log mixture density (per metre per unit time) at arbitrary points."""
    xy = np.asarray(xy, dtype=float)
    t = np.asarray(t, dtype=float)
    pts = net.points_from_arrays(est.center_seg, est.center_off)
    with np.errstate(divide="ignore"):
        if weight_mode == "renormalized":
            logw = np.log(renormalized_weights(est.q, est.nonempty))
        else:
            logw = np.log(np.where(est.nonempty, est.q, 0.0))
    ks = log_spatial_matrix(kernels, xy, pts.xy, est.w_s)
    kt = log_temporal_matrix(t, est.center_t, est.w_t)
    return logsumexp(logw[None, :] + ks + kt, axis=1)
