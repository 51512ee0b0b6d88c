"""Scikit-learn style front end to the network mixture model."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin

from ._validation import as_float_array
from .errors import InputError
from .kernels import log_spatial_matrix, log_temporal_matrix
from .model import (FitConfig, ModelContext, mixture_log_density, point_estimate,
                    renormalized_weights, run_mcmc)
from .network import EventSet, LinearNetwork

__all__ = ["NetworkDPMixture"]


class NetworkDPMixture(ClusterMixin, BaseEstimator):
    """Space-time cluster detection on a road network.

    Fits a truncated stick-breaking mixture of network-corrected space-time
    kernels by MCMC, then extracts a least-squares representative partition.

    Parameters
    ----------
    network : LinearNetwork
        The road network events live on.
    max_clusters : int
        Truncation level of the mixture.
    n_iter, burnin_frac, thin : int, float, int
        Chain length and retention schedule.
    projection_cutoff : float
        Events farther than this (metres) from the network are rejected.
    on_unprojected : str
        'raise' (default) or 'drop'; dropped events get label -1.
    random_state : int
        Master seed; fits are bit-reproducible.

    Attributes
    ----------
    labels_ : (n,) compact cluster labels from the selected partition.
    cluster_centers_ : (k, 3) x, y, t of occupied cluster centers.
    w_s_, w_t_, b_u_ : posterior means.
    run_ : full thinned posterior (PosteriorRun).
    """

    def __init__(self, network: LinearNetwork | None = None, max_clusters: int = 20,
                 n_iter: int = 2000, burnin_frac: float = 0.5, thin: int = 10,
                 step_log_ws: float = 0.08, step_log_wt: float = 0.08,
                 concentration_rate: float = 1.0,
                 w_s_bounds: tuple[float, float] = (100.0, 1000.0),
                 w_t_max: float = 1.0, mc_points: int = 1000,
                 pixel_rows: int = 50, pixel_cols: int = 50,
                 weight_mode: str = "renormalized",
                 projection_cutoff: float = 500.0, on_unprojected: str = "raise",
                 random_state: int = 0):
        self.network = network
        self.max_clusters = max_clusters
        self.n_iter = n_iter
        self.burnin_frac = burnin_frac
        self.thin = thin
        self.step_log_ws = step_log_ws
        self.step_log_wt = step_log_wt
        self.concentration_rate = concentration_rate
        self.w_s_bounds = w_s_bounds
        self.w_t_max = w_t_max
        self.mc_points = mc_points
        self.pixel_rows = pixel_rows
        self.pixel_cols = pixel_cols
        self.weight_mode = weight_mode
        self.projection_cutoff = projection_cutoff
        self.on_unprojected = on_unprojected
        self.random_state = random_state

    def _config(self) -> FitConfig:
        return FitConfig(
            max_clusters=self.max_clusters, iterations=self.n_iter,
            burnin_frac=self.burnin_frac, thin=self.thin,
            step_log_ws=self.step_log_ws, step_log_wt=self.step_log_wt,
            concentration_rate=self.concentration_rate,
            w_s_bounds=tuple(self.w_s_bounds), w_t_max=self.w_t_max,
            mc_points=self.mc_points, pixel_rows=self.pixel_rows,
            pixel_cols=self.pixel_cols, weight_mode=self.weight_mode,
            seed=self.random_state).validate()

    def _project(self, X) -> tuple[EventSet, np.ndarray]:
        if self.network is None:
            raise InputError("network must be set before fitting")
        X = as_float_array(X, "X", ndim=2)
        if X.shape[1] != 3:
            raise InputError(f"X must be (n, 3) columns x, y, t; got {X.shape}")
        t = X[:, 2]
        if np.any((t < 0) | (t > 1)):
            raise InputError("times must be normalized to [0, 1] before fitting")
        seg, off, _ = self.network.project_many(X[:, :2], self.projection_cutoff)
        ok = seg >= 0
        if not ok.all():
            if self.on_unprojected == "raise":
                raise InputError(
                    f"{int((~ok).sum())} events beyond {self.projection_cutoff} m "
                    "of the network (set on_unprojected='drop' to discard)")
            if self.on_unprojected != "drop":
                raise InputError("on_unprojected must be 'raise' or 'drop'")
        pts = self.network.points_from_arrays(seg[ok], off[ok])
        return EventSet(pts.seg, pts.offset, pts.xy, t[ok]), ok

    def fit(self, X, y=None):
        """Fit to columns (x, y, t) with t already normalized into [0, 1]."""
        events, ok = self._project(X)
        cfg = self._config()
        ctx = ModelContext.build(events, self.network, cfg)
        self.run_ = run_mcmc(events, self.network, cfg, ctx=ctx)
        self.context_ = ctx
        self.estimate_ = point_estimate(self.run_)
        self.w_s_ = self.estimate_.w_s
        self.w_t_ = self.estimate_.w_t
        self.b_u_ = float(self.run_.b_u.mean())

        occupied = np.flatnonzero(self.estimate_.nonempty)
        self._label_of_cluster = {int(j): k for k, j in enumerate(occupied)}
        labels = np.full(len(X), -1, dtype=np.int64)
        labels[ok] = [self._label_of_cluster[int(j)] for j in self.estimate_.labels]
        self.labels_ = labels
        self.projection_mask_ = ok
        pts = self.network.points_from_arrays(
            self.estimate_.center_seg[occupied], self.estimate_.center_off[occupied])
        self.cluster_centers_ = np.column_stack(
            [pts.xy, self.estimate_.center_t[occupied]])
        self.n_clusters_ = len(occupied)
        return self

    def _check_fitted(self):
        if not hasattr(self, "run_"):
            raise InputError("estimator is not fitted yet")

    def predict(self, X) -> np.ndarray:
        """Assign events to the occupied clusters of the selected partition."""
        self._check_fitted()
        events, ok = self._project(X)
        est = self.estimate_
        occupied = np.flatnonzero(est.nonempty)
        pts = self.network.points_from_arrays(est.center_seg[occupied],
                                              est.center_off[occupied])
        logw = np.log(renormalized_weights(est.q, est.nonempty)[occupied])
        ks = log_spatial_matrix(self.context_.kernels, events.xy, pts.xy, est.w_s)
        kt = log_temporal_matrix(events.t, est.center_t[occupied], est.w_t)
        best = np.argmax(logw[None, :] + ks + kt, axis=1)
        labels = np.full(len(X), -1, dtype=np.int64)
        labels[ok] = best
        return labels

    def score_samples(self, X) -> np.ndarray:
        """Log mixture density (per metre per unit time) at (x, y, t) rows."""
        self._check_fitted()
        events, ok = self._project(X)
        vals = np.full(len(X), -np.inf)
        vals[ok] = mixture_log_density(self.network, self.context_.kernels,
                                       self.estimate_, events.xy, events.t,
                                       self.weight_mode)
        return vals
