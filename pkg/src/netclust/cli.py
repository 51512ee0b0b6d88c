"""Batch command-line interface.

Sub-commands: fit, postprocess, assess, kfun, pcf, simulate, amenity.
Every run writes a ``manifest.txt`` (line-oriented key=value) into its output
directory; reproducibility-relevant entries are hashed and the hash is
embedded as a comment line in every CSV the run produces.

Exit codes: 0 success, 2 input error, 3 consistency error, 4 numerical
failure.
"""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys

import numpy as np

from . import __version__
from .assess import GridSpec, assess, assess_scatter
from .errors import ConsistencyError, InputError, NetclustError, NumericalError
from .io import (FLOAT_FMT, manifest_entries_from_config, manifest_hash,
                 read_amenities_csv, read_events_csv, read_manifest,
                 read_events_used, read_run_outputs, sha256_file,
                 write_events_used, write_manifest, write_run_outputs)
from .model import FitConfig, ModelContext, point_estimate, run_mcmc
from .network import EventSet, LinearNetwork, build_network
from .sim import sim_mixture, sim_poisson
from .sumstats import amenity_mix, envelope_pvalue, kfunction, multitype_pcf

logger = logging.getLogger("netclust")

def _fmt(v) -> str:
    return FLOAT_FMT % v if isinstance(v, (float, np.floating)) else str(v)


def _limit_threads(n: int) -> None:
    try:
        from threadpoolctl import threadpool_limits
        global _thread_limiter
        _thread_limiter = threadpool_limits(limits=n)
    except ImportError:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(n)


def _opt(args, config_file: dict, key: str, cast, default):
    """Resolve an option: CLI flag beats config file beats default."""
    v = getattr(args, key, None)
    if v is not None:
        return v
    if key in config_file:
        try:
            return cast(config_file[key])
        except ValueError as exc:
            raise InputError(f"config key {key}: {exc}") from exc
    return default


def _load_config_file(args) -> dict:
    path = getattr(args, "config", None)
    if not path:
        return {}
    # hand-written config files get whitespace tolerance around key=value
    return {k.strip(): v.strip() for k, v in read_manifest(path).items()}


def _require(args, config_file: dict, key: str) -> str:
    v = _opt(args, config_file, key, str, None)
    if v is None:
        raise InputError(f"missing required option --{key.replace('_', '-')}")
    return v


def _outdir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def _open_csv(outdir: str, name: str, mhash: str):
    fh = open(os.path.join(outdir, name), "w", newline="")
    fh.write(f"# manifest_hash={mhash}\n")
    return fh


def _read_and_project(net: LinearNetwork, events_path: str, cutoff: float,
                      time_format: str, t_start, t_end):
    """Ingest an events CSV and project onto the network.

    Events farther than the cutoff from every segment are dropped with a
    warning; dropping them all is an input error.
    """
    xy, t, raw, scale = read_events_csv(events_path, time_format, t_start, t_end)
    seg, off, _ = net.project_many(xy, cutoff)
    keep = seg >= 0
    n_drop = int((~keep).sum())
    if n_drop:
        logger.warning("dropping %d of %d events beyond %.0f m of the network",
                       n_drop, len(keep), cutoff)
    if not keep.any():
        raise InputError("no events project onto the network within the cutoff")
    idx = np.flatnonzero(keep)
    pts = net.points_from_arrays(seg[idx], off[idx])
    events = EventSet.from_points(pts, t[idx], raw[idx])
    return events, raw[idx], scale, n_drop


def _check_network_pairing(manifest: dict, network_path: str) -> None:
    want = manifest.get("input_network_sha256")
    if want is not None and sha256_file(network_path) != want:
        raise ConsistencyError(
            "network file does not match the one recorded in the run manifest")


def _quarter_label(posix_seconds: float) -> str:
    d = np.datetime64(int(round(posix_seconds)), "s")
    year = d.astype("datetime64[Y]").astype(int) + 1970
    month0 = int(d.astype("datetime64[M]").astype(np.int64)) % 12
    return f"{year} Q{month0 // 3 + 1}"


def _time_labels(manifest: dict, t_norm: np.ndarray) -> list[str]:
    """Quarter labels from normalized times via the run's time scale.

    Only date-formatted inputs yield calendar quarters; float times get an
    empty label.
    """
    if manifest.get("time_format") != "date":
        return ["" for _ in t_norm]
    t0 = float(manifest["time_t0"])
    t1 = float(manifest["time_t1"])
    return [_quarter_label(t0 + t * (t1 - t0)) for t in t_norm]


# -- fit -----------------------------------------------------------------------


def cmd_fit(args) -> int:
    cf = _load_config_file(args)
    network_path = _require(args, cf, "network")
    events_path = _require(args, cf, "events")
    outdir = _outdir(_require(args, cf, "out"))

    cfg = FitConfig(
        max_clusters=_opt(args, cf, "max_clusters", int, 20),
        iterations=_opt(args, cf, "iters", int, 2000),
        burnin_frac=_opt(args, cf, "burnin", float, 0.5),
        thin=_opt(args, cf, "thin", int, 10),
        step_log_ws=_opt(args, cf, "step_ws", float, 0.08),
        step_log_wt=_opt(args, cf, "step_wt", float, 0.08),
        concentration_rate=_opt(args, cf, "concentration_rate", float, 1.0),
        w_s_bounds=(_opt(args, cf, "w_s_lo", float, 100.0),
                    _opt(args, cf, "w_s_hi", float, 1000.0)),
        w_t_max=_opt(args, cf, "w_t_max", float, 1.0),
        mc_points=_opt(args, cf, "mc_points", int, 1000),
        pixel_rows=_opt(args, cf, "pixel_rows", int, 50),
        pixel_cols=_opt(args, cf, "pixel_cols", int, 50),
        weight_mode=_opt(args, cf, "weight_mode", str, "renormalized"),
        seed=_opt(args, cf, "seed", int, 0),
    ).validate()
    cutoff = _opt(args, cf, "cutoff_m", float, 500.0)
    time_format = _opt(args, cf, "time_format", str, "float")
    t_start = _opt(args, cf, "t_start", str, None)
    t_end = _opt(args, cf, "t_end", str, None)

    net = build_network(network_path)
    events, raw_used, scale, n_drop = _read_and_project(
        net, events_path, cutoff, time_format, t_start, t_end)

    entries = {
        "command": "fit",
        "version": __version__,
        "input_network_sha256": sha256_file(network_path),
        "input_events_sha256": sha256_file(events_path),
        "path_network": os.path.abspath(network_path),
        "path_events": os.path.abspath(events_path),
        "cutoff_m": cutoff,
        "time_format": scale.fmt,
        "time_t0": scale.t0,
        "time_t1": scale.t1,
    }
    entries.update(manifest_entries_from_config(cfg))
    mhash = write_manifest(os.path.join(outdir, "manifest.txt"), entries)

    run = run_mcmc(events, net, cfg)

    write_run_outputs(outdir, run, net, mhash)
    write_events_used(os.path.join(outdir, "events_used.csv"), events, raw_used, mhash)
    entries.update({
        "result_n_events_input": len(raw_used) + n_drop,
        "result_n_events_used": len(events),
        "result_n_events_dropped": n_drop,
        "result_n_retained": run.n_retained,
        "result_theta_accept": run.theta_accept_rate,
        "result_center_accept": run.center_accept_rate,
        "result_degenerate_events": run.n_degenerate,
        "result_wall_time": run.wall_time,
        "result_post_mean_w_s": float(run.w_s.mean()),
        "result_post_mean_w_t": float(run.w_t.mean()),
        "result_post_mean_b_u": float(run.b_u.mean()),
        "result_mean_nonempty": float(run.n_nonempty.mean()),
    })
    write_manifest(os.path.join(outdir, "manifest.txt"), entries)
    logger.info("fit complete: %d retained draws -> %s", run.n_retained, outdir)
    return 0


# -- postprocess ---------------------------------------------------------------


def cmd_postprocess(args) -> int:
    cf = _load_config_file(args)
    rundir = _require(args, cf, "run")
    network_path = _require(args, cf, "network")
    outdir = _outdir(_require(args, cf, "out"))
    if os.path.abspath(outdir) == os.path.abspath(rundir):
        raise InputError("postprocess output directory must differ from the run directory")

    run_manifest = read_manifest(os.path.join(rundir, "manifest.txt"))
    _check_network_pairing(run_manifest, network_path)
    net = build_network(network_path)
    run, fit_hash = read_run_outputs(rundir)

    est = point_estimate(run)
    occupied = sorted(set(int(v) for v in est.labels))
    compact = {j: k for k, j in enumerate(occupied)}
    sizes = {j: int((est.labels == j).sum()) for j in occupied}
    pts = net.points_from_arrays(est.center_seg, est.center_off)
    center_quarters = _time_labels(run_manifest, est.center_t)

    entries = {
        "command": "postprocess",
        "version": __version__,
        "input_run_hash": fit_hash,
        "path_run": os.path.abspath(rundir),
        "result_n_clusters": len(occupied),
        "result_dahl_index": est.dahl_index,
        "result_post_mean_w_s": est.w_s,
        "result_post_mean_w_t": est.w_t,
    }
    mhash = write_manifest(os.path.join(outdir, "manifest.txt"), entries)

    with _open_csv(outdir, "estimate.csv", mhash) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cluster", "seg_id", "offset", "x", "y", "t", "size", "quarter"])
        for j in occupied:
            w.writerow([compact[j], est.center_seg[j], _fmt(est.center_off[j]),
                        _fmt(pts.xy[j, 0]), _fmt(pts.xy[j, 1]),
                        _fmt(est.center_t[j]), sizes[j], center_quarters[j]])

    events, raw = read_events_used(os.path.join(rundir, "events_used.csv"), net)
    if len(events) != len(est.labels):
        raise ConsistencyError("events_used.csv does not match the membership draws")
    event_quarters = _time_labels(run_manifest, events.t)
    with _open_csv(outdir, "labels.csv", mhash) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["event_id", "cluster", "quarter"])
        for i, lab in enumerate(est.labels):
            w.writerow([i, compact[int(lab)], event_quarters[i]])
    logger.info("postprocess: %d clusters -> %s", len(occupied), outdir)
    return 0


# -- assess --------------------------------------------------------------------


def cmd_assess(args) -> int:
    cf = _load_config_file(args)
    rundir = _require(args, cf, "run")
    network_path = _require(args, cf, "network")
    outdir = _outdir(_require(args, cf, "out"))
    per_draw = bool(getattr(args, "per_draw", False))

    run_manifest = read_manifest(os.path.join(rundir, "manifest.txt"))
    _check_network_pairing(run_manifest, network_path)
    net = build_network(network_path)
    run, fit_hash = read_run_outputs(rundir)
    events, _ = read_events_used(os.path.join(rundir, "events_used.csv"), net)

    ctx = ModelContext.build(events, net, run.cfg)
    grid = GridSpec.build(net)
    table = assess(run, events, net, ctx.kernels, grid,
                   weight_mode=run.cfg.weight_mode, per_draw=per_draw)
    summary = assess_scatter(table)

    entries = {
        "command": "assess",
        "version": __version__,
        "input_run_hash": fit_hash,
        "path_run": os.path.abspath(rundir),
        "per_draw": int(per_draw),
        "result_n_cells": summary.n_cells,
        "result_rmse": summary.rmse,
        "result_correlation": "" if summary.correlation is None else summary.correlation,
    }
    mhash = write_manifest(os.path.join(outdir, "manifest.txt"), entries)

    with _open_csv(outdir, "cells.csv", mhash) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cell_ix", "cell_iy", "cell_it", "p_theory", "p_obs"])
        for ix, iy, it, pt, po in table.rows():
            w.writerow([ix, iy, it, _fmt(pt), _fmt(po)])
    corr = "n/a" if summary.correlation is None else f"{summary.correlation:.4f}"
    logger.info("assess: correlation %s rmse %.3e -> %s", corr, summary.rmse, outdir)
    return 0


# -- second-order statistics ---------------------------------------------------


def _uniform_grid(max_val: float, steps: int) -> np.ndarray:
    return np.linspace(max_val / steps, max_val, steps)


def cmd_kfun(args) -> int:
    cf = _load_config_file(args)
    network_path = _require(args, cf, "network")
    events_path = _require(args, cf, "events")
    outdir = _outdir(_require(args, cf, "out"))
    net = build_network(network_path)

    diag = float(np.hypot(net.window.width, net.window.height))
    r_max = _opt(args, cf, "r_max", float, 0.25 * diag)
    r_steps = _opt(args, cf, "r_steps", int, 20)
    t_max = _opt(args, cf, "t_max", float, 0.25)
    t_steps = _opt(args, cf, "t_steps", int, 10)
    m = _opt(args, cf, "mmax_envelopes", int, 99)
    seed = _opt(args, cf, "seed", int, 0)
    cutoff = _opt(args, cf, "cutoff_m", float, 500.0)
    time_format = _opt(args, cf, "time_format", str, "float")
    t_start = _opt(args, cf, "t_start", str, None)
    t_end = _opt(args, cf, "t_end", str, None)

    events, _, scale, _ = _read_and_project(net, events_path, cutoff,
                                            time_format, t_start, t_end)
    r_grid = _uniform_grid(r_max, r_steps)
    t_grid = _uniform_grid(t_max, t_steps)

    entries = {
        "command": "kfun",
        "version": __version__,
        "input_network_sha256": sha256_file(network_path),
        "input_events_sha256": sha256_file(events_path),
        "path_network": os.path.abspath(network_path),
        "path_events": os.path.abspath(events_path),
        "cutoff_m": cutoff,
        "time_format": scale.fmt,
        "time_t0": scale.t0,
        "time_t1": scale.t1,
        "r_max": r_max, "r_steps": r_steps,
        "t_max": t_max, "t_steps": t_steps,
        "mmax_envelopes": m,
        "seed": seed,
    }
    mhash = write_manifest(os.path.join(outdir, "manifest.txt"), entries)

    if m > 0:
        env = envelope_pvalue(events, net, r_grid, t_grid, m=m,
                              rng=np.random.default_rng(seed))
        surf = env.surface
        with _open_csv(outdir, "kfun.csv", mhash) as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["r", "t", "k", "env_lo", "env_hi"])
            for a, r in enumerate(r_grid):
                for b, tt in enumerate(t_grid):
                    w.writerow([_fmt(r), _fmt(tt), _fmt(surf.K[a, b]),
                                _fmt(env.env_lo[a, b]), _fmt(env.env_hi[a, b])])
        entries.update({
            "result_p_value": env.p_value,
            "result_t_obs": env.t_obs,
            "result_n_excluded_nodes": env.n_excluded,
        })
        write_manifest(os.path.join(outdir, "manifest.txt"), entries)
        logger.info("kfun: envelope p-value %.4f -> %s", env.p_value, outdir)
    else:
        surf = kfunction(events, net, r_grid, t_grid)
        with _open_csv(outdir, "kfun.csv", mhash) as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["r", "t", "k"])
            for a, r in enumerate(r_grid):
                for b, tt in enumerate(t_grid):
                    w.writerow([_fmt(r), _fmt(tt), _fmt(surf.K[a, b])])
        logger.info("kfun: surface written -> %s", outdir)
    return 0


def cmd_pcf(args) -> int:
    cf = _load_config_file(args)
    network_path = _require(args, cf, "network")
    events_path = _require(args, cf, "events")
    events2_path = _require(args, cf, "events2")
    outdir = _outdir(_require(args, cf, "out"))
    net = build_network(network_path)

    diag = float(np.hypot(net.window.width, net.window.height))
    r_max = _opt(args, cf, "r_max", float, 0.25 * diag)
    r_steps = _opt(args, cf, "r_steps", int, 50)
    bandwidth = _opt(args, cf, "bandwidth", float, None)
    cutoff = _opt(args, cf, "cutoff_m", float, 500.0)
    time_format = _opt(args, cf, "time_format", str, "float")
    t_start = _opt(args, cf, "t_start", str, None)
    t_end = _opt(args, cf, "t_end", str, None)

    ev1, _, _, _ = _read_and_project(net, events_path, cutoff, time_format, t_start, t_end)
    ev2, _, _, _ = _read_and_project(net, events2_path, cutoff, time_format, t_start, t_end)
    r_grid = _uniform_grid(r_max, r_steps)
    curve = multitype_pcf(ev1, ev2, net, r_grid, h=bandwidth)

    entries = {
        "command": "pcf",
        "version": __version__,
        "input_network_sha256": sha256_file(network_path),
        "input_events_sha256": sha256_file(events_path),
        "input_events2_sha256": sha256_file(events2_path),
        "path_network": os.path.abspath(network_path),
        "cutoff_m": cutoff,
        "r_max": r_max, "r_steps": r_steps,
        "bandwidth": "scott" if bandwidth is None else bandwidth,
        "result_bandwidth": curve.bandwidth,
        "result_n_pairs": curve.n_pairs,
    }
    mhash = write_manifest(os.path.join(outdir, "manifest.txt"), entries)

    with _open_csv(outdir, "pcf.csv", mhash) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["r", "g"])
        for r, g in zip(curve.r, curve.g):
            w.writerow([_fmt(r), _fmt(g)])
    logger.info("pcf: %d radii, bandwidth %.2f m -> %s", len(r_grid), curve.bandwidth, outdir)
    return 0


# -- simulate ------------------------------------------------------------------


def _read_truth_centers(path):
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise InputError(f"cannot open centers file {path}: {exc}") from exc
    segs, offs, ts, ws = [], [], [], []
    with fh:
        rows = iter([r for r in csv.reader(fh)
                     if r and not r[0].lstrip().startswith("#")])
        header = next(rows, None)
        if header is None or [h.strip() for h in header] != ["seg_id", "offset", "t", "weight"]:
            raise InputError(f"centers file {path} must have header seg_id,offset,t,weight")
        for row in rows:
            if len(row) != 4:
                raise InputError(f"{path}: expected 4 fields per row")
            segs.append(int(row[0]))
            offs.append(float(row[1]))
            ts.append(float(row[2]))
            ws.append(float(row[3]))
    if not segs:
        raise InputError(f"centers file {path} has no data rows")
    weights = np.asarray(ws, dtype=float)
    if np.any(weights <= 0):
        raise InputError("center weights must be positive")
    offsets = np.asarray(offs, dtype=float)
    if np.any((offsets < 0.0) | (offsets > 1.0)):
        raise InputError("center offsets are segment fractions and must lie in [0, 1]")
    return (np.asarray(segs, dtype=np.int64), offsets,
            np.asarray(ts, dtype=float), weights / weights.sum())


def cmd_simulate(args) -> int:
    cf = _load_config_file(args)
    network_path = _require(args, cf, "network")
    outdir = _outdir(_require(args, cf, "out"))
    mode = _opt(args, cf, "mode", str, "uniform")
    n = _opt(args, cf, "n", int, 500)
    seed = _opt(args, cf, "seed", int, 0)
    net = build_network(network_path)
    rng = np.random.default_rng(seed)

    entries = {
        "command": "simulate",
        "version": __version__,
        "input_network_sha256": sha256_file(network_path),
        "path_network": os.path.abspath(network_path),
        "mode": mode, "n": n, "seed": seed,
    }

    if mode == "uniform":
        events = sim_poisson(net, n=n, rng=rng)
        memberships = np.full(n, -1, dtype=np.int64)
    elif mode == "mixture":
        centers_path = _require(args, cf, "centers")
        w_s = _opt(args, cf, "w_s", float, None)
        w_t = _opt(args, cf, "w_t", float, None)
        if w_s is None or w_t is None:
            raise InputError("mixture mode requires --w-s and --w-t")
        seg, off, ct, weights = _read_truth_centers(centers_path)
        if seg.min() < 0 or seg.max() >= net.n_segments:
            raise InputError(
                f"center seg_id out of range (network has {net.n_segments} segments)")
        centers = net.points_from_arrays(seg, off)
        truth = sim_mixture(net, centers, ct, w_s, w_t, weights, n, rng)
        events, memberships = truth.events, truth.memberships
        entries.update({
            "input_centers_sha256": sha256_file(centers_path),
            "w_s": w_s, "w_t": w_t,
            "result_max_outside_time_mass": float(truth.outside_mass.max()),
        })
    else:
        raise InputError(f"unknown simulate mode {mode!r} (use uniform or mixture)")

    mhash = write_manifest(os.path.join(outdir, "manifest.txt"), entries)
    with _open_csv(outdir, "events.csv", mhash) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "t"])
        for i in range(len(events)):
            w.writerow([_fmt(events.xy[i, 0]), _fmt(events.xy[i, 1]), _fmt(events.t[i])])
    with _open_csv(outdir, "truth.csv", mhash) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["event_id", "cluster", "t"])
        for i in range(len(events)):
            w.writerow([i, memberships[i], _fmt(events.t[i])])
    logger.info("simulate: %d events (%s) -> %s", len(events), mode, outdir)
    return 0


# -- amenity -------------------------------------------------------------------


def cmd_amenity(args) -> int:
    cf = _load_config_file(args)
    rundir = _require(args, cf, "run")
    network_path = _require(args, cf, "network")
    amenities_path = _require(args, cf, "amenities")
    outdir = _outdir(_require(args, cf, "out"))

    run_manifest = read_manifest(os.path.join(rundir, "manifest.txt"))
    _check_network_pairing(run_manifest, network_path)
    net = build_network(network_path)
    run, fit_hash = read_run_outputs(rundir)
    amen_xy, cats = read_amenities_csv(amenities_path)

    est = point_estimate(run)
    occupied = sorted(set(int(v) for v in est.labels))
    pts = net.points_from_arrays(est.center_seg[occupied], est.center_off[occupied])
    radius = _opt(args, cf, "radius", float, 2.0 * est.w_s)
    table = amenity_mix(pts.xy, amen_xy, cats, radius)

    entries = {
        "command": "amenity",
        "version": __version__,
        "input_run_hash": fit_hash,
        "input_amenities_sha256": sha256_file(amenities_path),
        "path_run": os.path.abspath(rundir),
        "radius_m": radius,
        "result_n_clusters": len(occupied),
        "result_n_categories": len(table.categories),
        "result_n_empty_clusters": int(table.empty.sum()),
    }
    mhash = write_manifest(os.path.join(outdir, "manifest.txt"), entries)

    with _open_csv(outdir, "amenity.csv", mhash) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cluster", "category", "count", "share"])
        for j, cat, share in table.rows():
            c = table.categories.index(cat)
            w.writerow([j, cat, int(table.counts[j, c]), _fmt(share)])
    logger.info("amenity: %d clusters x %d categories (radius %.0f m) -> %s",
                len(occupied), len(table.categories), radius, outdir)
    return 0


# -- parser --------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value file; flags override its entries")
    p.add_argument("--threads", type=int, help="cap BLAS worker threads")
    p.add_argument("--verbose", action="store_true", help="debug logging")


def _add_ingest(p: argparse.ArgumentParser) -> None:
    p.add_argument("--cutoff-m", dest="cutoff_m", type=float,
                   help="projection cutoff in metres (default 500)")
    p.add_argument("--time-format", dest="time_format", choices=("float", "date"),
                   help="how to parse the t column (default float)")
    p.add_argument("--t-start", dest="t_start", help="time-window start override")
    p.add_argument("--t-end", dest="t_end", help="time-window end override")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="netclust",
        description="Bayesian space-time cluster detection on street networks")
    parser.add_argument("--version", action="version", version=f"netclust {__version__}")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("fit", help="run the MCMC sampler")
    p.add_argument("--network")
    p.add_argument("--events")
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--iters", type=int)
    p.add_argument("--max-clusters", dest="max_clusters", type=int)
    p.add_argument("--burnin", type=float, help="burn-in fraction in [0, 1)")
    p.add_argument("--thin", type=int)
    p.add_argument("--step-ws", dest="step_ws", type=float)
    p.add_argument("--step-wt", dest="step_wt", type=float)
    p.add_argument("--concentration-rate", dest="concentration_rate", type=float)
    p.add_argument("--w-s-lo", dest="w_s_lo", type=float)
    p.add_argument("--w-s-hi", dest="w_s_hi", type=float)
    p.add_argument("--w-t-max", dest="w_t_max", type=float)
    p.add_argument("--mc-points", dest="mc_points", type=int)
    p.add_argument("--pixel-rows", dest="pixel_rows", type=int)
    p.add_argument("--pixel-cols", dest="pixel_cols", type=int)
    p.add_argument("--weight-mode", dest="weight_mode", choices=("renormalized", "raw"))
    _add_ingest(p)
    _add_common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("postprocess", help="partition selection and center summary")
    p.add_argument("--run")
    p.add_argument("--network")
    p.add_argument("--out")
    _add_common(p)
    p.set_defaults(func=cmd_postprocess)

    p = sub.add_parser("assess", help="theoretical vs observed cube proportions")
    p.add_argument("--run")
    p.add_argument("--network")
    p.add_argument("--out")
    p.add_argument("--per-draw", dest="per_draw", action="store_true",
                   help="average the theoretical surface over every retained draw")
    _add_common(p)
    p.set_defaults(func=cmd_assess)

    p = sub.add_parser("kfun", help="network space-time K-function with envelopes")
    p.add_argument("--network")
    p.add_argument("--events")
    p.add_argument("--out")
    p.add_argument("--r-max", dest="r_max", type=float)
    p.add_argument("--r-steps", dest="r_steps", type=int)
    p.add_argument("--t-max", dest="t_max", type=float)
    p.add_argument("--t-steps", dest="t_steps", type=int)
    p.add_argument("--mmax-envelopes", dest="mmax_envelopes", type=int,
                   help="number of Poisson envelopes (0 = surface only)")
    p.add_argument("--seed", type=int)
    _add_ingest(p)
    _add_common(p)
    p.set_defaults(func=cmd_kfun)

    p = sub.add_parser("pcf", help="multitype pair correlation function")
    p.add_argument("--network")
    p.add_argument("--events")
    p.add_argument("--out")
    p.add_argument("--events2", help="second pattern CSV")
    p.add_argument("--r-max", dest="r_max", type=float)
    p.add_argument("--r-steps", dest="r_steps", type=int)
    p.add_argument("--bandwidth", type=float, help="Gaussian bandwidth (default Scott)")
    _add_ingest(p)
    _add_common(p)
    p.set_defaults(func=cmd_pcf)

    p = sub.add_parser("simulate", help="generate synthetic fixtures")
    p.add_argument("--network")
    p.add_argument("--out")
    p.add_argument("--mode", choices=("uniform", "mixture"))
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--centers", help="mixture truth CSV: seg_id,offset,t,weight")
    p.add_argument("--w-s", dest="w_s", type=float)
    p.add_argument("--w-t", dest="w_t", type=float)
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("amenity", help="amenity mix around fitted cluster centers")
    p.add_argument("--run")
    p.add_argument("--network")
    p.add_argument("--amenities")
    p.add_argument("--out")
    p.add_argument("--radius", type=float, help="planar radius in metres (default 2 w_s)")
    _add_common(p)
    p.set_defaults(func=cmd_amenity)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if getattr(args, "verbose", False) else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "threads", None):
        _limit_threads(args.threads)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ConsistencyError as exc:
        print(f"consistency error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4
    except NetclustError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
