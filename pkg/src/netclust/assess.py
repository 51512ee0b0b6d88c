"""Model assessment: theoretical vs observed space-time cube proportions.

The window-by-period box is cut into coarse cubes.  The fitted mixture's
theoretical mass per cube is a Riemann sum on a much finer subgrid,
restricted to the part of each subcell actually covered by network (in-cell
network length times time-slab width); observed mass is the event share.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from ._validation import check_int
from .errors import InputError
from .kernels import KernelConfig, log_spatial_matrix, log_temporal_matrix
from .model import (ModelContext, PointEstimate, PosteriorRun, nonempty_mask,
                    point_estimate, renormalized_weights)
from .network import EventSet, LinearNetwork, Window, segment_cell_intervals

__all__ = ["GridSpec", "CellTable", "AssessSummary", "theoretical_props",
           "observed_props", "assess", "assess_scatter"]


@dataclass(frozen=True, eq=False)
class GridSpec:
    """Coarse assessment cubes backed by an integration subgrid.

    Subgrid dimensions must be integer multiples of the coarse ones.
    Spatial subcell weights (in-cell network length) and representative
    points are precomputed once.
    """
    window: Window
    sub: tuple[int, int, int]      # (sx, sy, st)
    coarse: tuple[int, int, int]   # (cx, cy, ct)
    rep_xy: np.ndarray             # (A, 2) active-subcell representatives
    rep_len: np.ndarray            # (A,) in-subcell network length
    rep_ix: np.ndarray             # (A,)
    rep_iy: np.ndarray             # (A,)

    @classmethod
    def build(cls, net: LinearNetwork, sub: tuple[int, int, int] = (200, 200, 10),
              coarse: tuple[int, int, int] = (5, 5, 10)) -> "GridSpec":
        sx, sy, st = (check_int(v, "sub dim", minimum=1) for v in sub)
        cx, cy, ct = (check_int(v, "coarse dim", minimum=1) for v in coarse)
        if sx % cx or sy % cy or st % ct:
            raise InputError(f"subgrid {sub} must be a multiple of coarse grid {coarse}")
        seg, iy, ix, t0, t1 = segment_cell_intervals(net, sy, sx, net.window)
        piece_len = (t1 - t0) * net.lengths[seg]
        keep = piece_len > 0
        seg, iy, ix, t0, t1, piece_len = (a[keep] for a in (seg, iy, ix, t0, t1, piece_len))

        # one representative + total length per active subcell
        order = np.lexsort((-piece_len, ix, iy))
        seg, iy, ix, t0, t1, piece_len = (a[order] for a in (seg, iy, ix, t0, t1, piece_len))
        cell_key = iy * sx + ix
        uniq, first = np.unique(cell_key, return_index=True)
        lengths = np.zeros(len(uniq))
        np.add.at(lengths, np.searchsorted(uniq, cell_key), piece_len)
        rep_seg = seg[first]
        rep_off = (t0[first] + t1[first]) / 2.0  # midpoint of the longest piece
        pts = net.points_from_arrays(rep_seg, rep_off)
        return cls(net.window, (sx, sy, st), (cx, cy, ct),
                   pts.xy, lengths, uniq % sx, uniq // sx)


@dataclass(frozen=True, eq=False)
class CellTable:
    """Coarse-cube proportions, theoretical and observed."""
    coarse: tuple[int, int, int]
    p_theory: np.ndarray  # (cy, cx, ct)
    p_obs: np.ndarray     # (cy, cx, ct)

    def rows(self):
        """Yield (cell_ix, cell_iy, cell_it, p_theory, p_obs) in fixed order."""
        cx, cy, ct = self.coarse
        for ix in range(cx):
            for iy in range(cy):
                for it in range(ct):
                    yield ix, iy, it, float(self.p_theory[iy, ix, it]), float(self.p_obs[iy, ix, it])


@dataclass(frozen=True)
class AssessSummary:
    n_cells: int
    correlation: float | None
    rmse: float


def _exact_unit_sum(p: np.ndarray) -> np.ndarray:
    """Nudge the largest entry so the array sums to exactly 1.0."""
    flat = p.reshape(-1)
    for _ in range(4):
        drift = 1.0 - flat.sum()
        if drift == 0.0:
            break
        flat[np.argmax(flat)] += drift
    return p


def _theoretical_single(est: PointEstimate, net: LinearNetwork, kernels: KernelConfig,
                        grid: GridSpec, weight_mode: str) -> np.ndarray:
    sx, sy, st = grid.sub
    cx, cy, ct = grid.coarse
    centers = net.points_from_arrays(est.center_seg, est.center_off)
    with np.errstate(divide="ignore"):
        if weight_mode == "renormalized":
            logw = np.log(renormalized_weights(est.q, est.nonempty))
        else:
            logw = np.log(np.where(est.nonempty, est.q, 0.0))
    ks = log_spatial_matrix(kernels, grid.rep_xy, centers.xy, est.w_s)  # (A, M)
    t_mid = (np.arange(st) + 0.5) / st
    kt = log_temporal_matrix(t_mid, est.center_t, est.w_t)              # (st, M)
    # mass(a, k) = density(rep_a, t_k) * len_a * (1 / st); chunk over subcells
    A = len(grid.rep_xy)
    mass = np.empty((A, st))
    for lo in range(0, A, 2048):
        blk = slice(lo, min(lo + 2048, A))
        dens = np.exp(logsumexp(logw[None, None, :] + ks[blk, None, :] + kt[None, :, :], axis=2))
        mass[blk] = dens * grid.rep_len[blk, None] / st

    coarse_iy = grid.rep_iy // (sy // cy)
    coarse_ix = grid.rep_ix // (sx // cx)
    slab_to_coarse = np.arange(st) // (st // ct)
    out = np.zeros((cy, cx, ct))
    for k in range(st):
        np.add.at(out[:, :, slab_to_coarse[k]], (coarse_iy, coarse_ix), mass[:, k])
    total = out.sum()
    if total <= 0:
        raise InputError("fitted mixture places no mass on the network window")
    return out / total


def theoretical_props(estimate, net: LinearNetwork, kernels: KernelConfig,
                      grid: GridSpec, weight_mode: str = "renormalized",
                      per_draw: bool = False) -> np.ndarray:
    """Theoretical coarse-cube proportions under the fitted mixture.

    `estimate` is a PointEstimate, or a PosteriorRun (reduced to its
    posterior-mean plug-in by default; per_draw=True instead averages the
    surface over every retained draw).
    """
    if isinstance(estimate, PosteriorRun):
        if per_draw:
            run = estimate
            M = run.q.shape[1]
            acc = None
            for b in range(run.n_retained):
                est_b = PointEstimate(
                    w_s=float(run.w_s[b]), w_t=float(run.w_t[b]),
                    center_seg=run.center_seg[b], center_off=run.center_off[b],
                    center_t=run.center_t[b], q=run.q[b],
                    nonempty=nonempty_mask(run.G[b], M), labels=run.G[b],
                    dahl_index=b)
                p = _theoretical_single(est_b, net, kernels, grid, weight_mode)
                acc = p if acc is None else acc + p
            return _exact_unit_sum(acc / run.n_retained)
        estimate = point_estimate(estimate)
    return _exact_unit_sum(_theoretical_single(estimate, net, kernels, grid, weight_mode))


def observed_props(events: EventSet, grid: GridSpec) -> np.ndarray:
    """Observed coarse-cube proportions: event count per cube over N."""
    if len(events) == 0:
        raise InputError("no events to assess")
    cx, cy, ct = grid.coarse
    w = grid.window
    stepx = w.width / cx
    stepy = w.height / cy
    ix = np.zeros(len(events), dtype=np.int64) if stepx == 0 else \
        np.clip(np.floor((events.xy[:, 0] - w.xmin) / stepx).astype(np.int64), 0, cx - 1)
    iy = np.zeros(len(events), dtype=np.int64) if stepy == 0 else \
        np.clip(np.floor((events.xy[:, 1] - w.ymin) / stepy).astype(np.int64), 0, cy - 1)
    it = np.clip(np.floor(events.t * ct).astype(np.int64), 0, ct - 1)
    counts = np.zeros((cy, cx, ct))
    np.add.at(counts, (iy, ix, it), 1.0)
    return _exact_unit_sum(counts / len(events))


def assess(estimate, events: EventSet, net: LinearNetwork, kernels: KernelConfig,
           grid: GridSpec | None = None, weight_mode: str = "renormalized",
           per_draw: bool = False) -> CellTable:
    """Pair theoretical and observed cube proportions on one grid."""
    if grid is None:
        grid = GridSpec.build(net)
    pt = theoretical_props(estimate, net, kernels, grid, weight_mode, per_draw)
    po = observed_props(events, grid)
    return CellTable(grid.coarse, pt, po)


def assess_scatter(table: CellTable) -> AssessSummary:
    """Scatter summary: Pearson correlation and RMSE over all coarse cubes.

    Correlation is reported as absent (None) when fewer than 3 cubes carry
    any mass or either side is constant.
    """
    x = table.p_theory.reshape(-1)
    y = table.p_obs.reshape(-1)
    nonzero = int(np.sum((x != 0) | (y != 0)))
    rmse = float(np.sqrt(np.mean((x - y) ** 2)))
    if nonzero < 3 or np.std(x) == 0 or np.std(y) == 0:
        return AssessSummary(x.size, None, rmse)
    corr = float(np.corrcoef(x, y)[0, 1])
    if not np.isfinite(corr):
        return AssessSummary(x.size, None, rmse)
    return AssessSummary(x.size, corr, rmse)
