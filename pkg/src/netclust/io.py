"""File formats: events and amenity CSVs, run outputs, manifests.

Every CSV written by a run starts with a ``# manifest_hash=...`` comment so
outputs can be traced to the exact configuration and inputs that produced
them.  Floats are formatted with %.12g for byte-stable reruns.
"""
from __future__ import annotations

import csv
import hashlib
import os
from dataclasses import dataclass

import numpy as np

from .errors import ConsistencyError, InputError
from .model import FitConfig, PosteriorRun
from .network import EventSet, LinearNetwork

__all__ = [
    "sha256_file",
    "manifest_hash",
    "write_manifest",
    "read_manifest",
    "TimeScale",
    "read_events_csv",
    "read_amenities_csv",
    "write_run_outputs",
    "read_run_outputs",
    "write_events_used",
    "read_events_used",
]

FLOAT_FMT = "%.12g"


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return FLOAT_FMT % v
    return str(v)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    try:
        with open(path, "rb") as fh:
            for block in iter(lambda: fh.read(1 << 20), b""):
                h.update(block)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    return h.hexdigest()


def manifest_hash(entries: dict) -> str:
    """Hash of the reproducibility-relevant manifest entries (sorted).

    Keys prefixed ``result_`` (outcomes) or ``path_`` (local filesystem
    locations) do not participate, so reruns from different directories
    still agree.
    """
    stable = {k: v for k, v in entries.items()
              if not k.startswith(("result_", "path_")) and k != "manifest_hash"}
    text = "\n".join(f"{k}={_fmt(stable[k])}" for k in sorted(stable))
    return hashlib.sha256(text.encode()).hexdigest()


def write_manifest(path, entries: dict) -> str:
    entries = dict(entries)
    entries["manifest_hash"] = manifest_hash(entries)
    with open(path, "w") as fh:
        for k in sorted(entries):
            fh.write(f"{k}={_fmt(entries[k])}\n")
    return entries["manifest_hash"]


def read_manifest(path) -> dict:
    out = {}
    try:
        with open(path) as fh:
            for line in fh:
                line = line.rstrip("\r\n")
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise InputError(f"malformed manifest line: {line!r}")
                k, v = line.split("=", 1)
                out[k] = v
    except OSError as exc:
        raise InputError(f"cannot read manifest {path}: {exc}") from exc
    return out


# -- events ------------------------------------------------------------------


@dataclass(frozen=True)
class TimeScale:
    """Normalization applied to raw times: t_norm = (raw - t0) / (t1 - t0)."""
    fmt: str          # 'float' or 'date'
    t0: float         # float value, or POSIX seconds for dates
    t1: float

    def normalize(self, raw: np.ndarray) -> np.ndarray:
        span = self.t1 - self.t0
        if span <= 0:
            raise InputError("degenerate time window (t_end must exceed t_start)")
        return (raw - self.t0) / span


def _parse_date(value: str) -> float:
    try:
        return float(np.datetime64(value.strip(), "s").astype(np.int64))
    except Exception as exc:
        raise InputError(f"cannot parse ISO date {value!r}: {exc}") from exc


def _data_rows(reader):
    """Yield (lineno, row) pairs skipping blank lines and # comments."""
    for lineno, row in enumerate(reader, start=1):
        if not row or row[0].lstrip().startswith("#"):
            continue
        yield lineno, row


def read_events_csv(path, time_format: str = "float",
                    t_start=None, t_end=None):
    """Read an events CSV with header ``x,y,t``.

    Returns (xy, t_norm, raw, scale).  Raw times are floats (time_format
    'float') or ISO-8601 dates converted to POSIX seconds ('date'); the
    normalization bounds default to the observed min and max unless
    overridden.
    """
    if time_format not in ("float", "date"):
        raise InputError(f"time_format must be 'float' or 'date', got {time_format!r}")
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise InputError(f"cannot open events file {path}: {exc}") from exc
    xs, ys, raws = [], [], []
    with fh:
        rows = _data_rows(csv.reader(fh))
        header = next(rows, None)
        if header is None or [h.strip() for h in header[1]] != ["x", "y", "t"]:
            raise InputError(f"events file {path} must have header x,y,t")
        for lineno, row in rows:
            if len(row) != 3:
                raise InputError(f"{path}: row {lineno} has {len(row)} fields, expected 3")
            try:
                xs.append(float(row[0]))
                ys.append(float(row[1]))
            except ValueError as exc:
                raise InputError(f"{path}: row {lineno}: {exc}") from exc
            if time_format == "float":
                try:
                    raws.append(float(row[2]))
                except ValueError as exc:
                    raise InputError(f"{path}: row {lineno}: {exc}") from exc
            else:
                raws.append(_parse_date(row[2]))
    if not xs:
        raise InputError(f"events file {path} has no data rows")
    xy = np.column_stack([xs, ys])
    if not np.all(np.isfinite(xy)):
        raise InputError(f"events file {path} contains non-finite coordinates")
    raw = np.asarray(raws, dtype=float)
    if not np.all(np.isfinite(raw)):
        raise InputError(f"events file {path} contains non-finite times")

    def _bound(v, default):
        if v is None:
            return default
        if time_format == "date":
            return _parse_date(str(v))
        return float(v)

    scale = TimeScale(time_format, _bound(t_start, float(raw.min())),
                      _bound(t_end, float(raw.max())))
    t_norm = scale.normalize(raw)
    if np.any((t_norm < 0) | (t_norm > 1)):
        raise InputError("events fall outside the declared time window")
    return xy, t_norm, raw, scale


def read_amenities_csv(path):
    """Read an amenity CSV with header ``x,y,category``."""
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise InputError(f"cannot open amenity file {path}: {exc}") from exc
    xs, ys, cats = [], [], []
    with fh:
        rows = _data_rows(csv.reader(fh))
        header = next(rows, None)
        if header is None or [h.strip() for h in header[1]] != ["x", "y", "category"]:
            raise InputError(f"amenity file {path} must have header x,y,category")
        for lineno, row in rows:
            if len(row) != 3:
                raise InputError(f"{path}: row {lineno} has {len(row)} fields, expected 3")
            try:
                xs.append(float(row[0]))
                ys.append(float(row[1]))
            except ValueError as exc:
                raise InputError(f"{path}: row {lineno}: {exc}") from exc
            cats.append(row[2].strip())
    if not xs:
        raise InputError(f"amenity file {path} has no data rows")
    return np.column_stack([xs, ys]), np.asarray(cats, dtype=object)


# -- run outputs ---------------------------------------------------------------


def _open_out(path, mhash: str):
    fh = open(path, "w", newline="")
    fh.write(f"# manifest_hash={mhash}\n")
    return fh


def write_run_outputs(outdir, run: PosteriorRun, net: LinearNetwork, mhash: str) -> None:
    """Write samples.csv, centers.csv, memberships.csv and weights.csv."""
    with _open_out(os.path.join(outdir, "samples.csv"), mhash) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iter", "w_s", "w_t", "b_u", "n_nonempty"])
        for b in range(run.n_retained):
            w.writerow([run.iters[b], _fmt(run.w_s[b]), _fmt(run.w_t[b]),
                        _fmt(run.b_u[b]), run.n_nonempty[b]])
    M = run.q.shape[1]
    with _open_out(os.path.join(outdir, "centers.csv"), mhash) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iter", "cluster", "seg_id", "offset", "x", "y", "t"])
        for b in range(run.n_retained):
            pts = net.points_from_arrays(run.center_seg[b], run.center_off[b])
            for j in range(M):
                w.writerow([run.iters[b], j, run.center_seg[b, j],
                            _fmt(run.center_off[b, j]), _fmt(pts.xy[j, 0]),
                            _fmt(pts.xy[j, 1]), _fmt(run.center_t[b, j])])
    with _open_out(os.path.join(outdir, "memberships.csv"), mhash) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iter", "event_id", "cluster"])
        for b in range(run.n_retained):
            for i, gi in enumerate(run.G[b]):
                w.writerow([run.iters[b], i, gi])
    with _open_out(os.path.join(outdir, "weights.csv"), mhash) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iter", "cluster", "q"])
        for b in range(run.n_retained):
            for j in range(M):
                w.writerow([run.iters[b], j, _fmt(run.q[b, j])])


def _read_csv_body(path, expected_header):
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise InputError(f"cannot open {path}: {exc}") from exc
    rows = []
    mhash = None
    with fh:
        first = fh.readline().rstrip("\r\n")
        if first.startswith("# manifest_hash="):
            mhash = first.split("=", 1)[1]
            header_line = fh.readline().rstrip("\r\n")
        else:
            header_line = first
        header = header_line.split(",")
        if header != expected_header:
            raise InputError(f"{path}: expected header {','.join(expected_header)}")
        for line in fh:
            line = line.rstrip("\r\n")
            if line:
                rows.append(line.split(","))
    if not rows:
        raise InputError(f"{path} has no data rows")
    return rows, mhash


def read_run_outputs(outdir) -> tuple[PosteriorRun, str]:
    """Rebuild a PosteriorRun from a fit output directory."""
    manifest = read_manifest(os.path.join(outdir, "manifest.txt"))
    cfg = config_from_manifest(manifest)
    srows, mhash = _read_csv_body(os.path.join(outdir, "samples.csv"),
                                  ["iter", "w_s", "w_t", "b_u", "n_nonempty"])
    iters = np.array([int(r[0]) for r in srows], dtype=np.int64)
    ws = np.array([float(r[1]) for r in srows])
    wt = np.array([float(r[2]) for r in srows])
    bu = np.array([float(r[3]) for r in srows])
    nne = np.array([int(r[4]) for r in srows], dtype=np.int64)

    crows, ch = _read_csv_body(os.path.join(outdir, "centers.csv"),
                               ["iter", "cluster", "seg_id", "offset", "x", "y", "t"])
    B = len(iters)
    M = cfg.max_clusters
    if len(crows) != B * M:
        raise ConsistencyError(f"centers.csv has {len(crows)} rows, expected {B * M}")
    cseg = np.array([int(r[2]) for r in crows], dtype=np.int64).reshape(B, M)
    coff = np.array([float(r[3]) for r in crows]).reshape(B, M)
    ct = np.array([float(r[6]) for r in crows]).reshape(B, M)

    mrows, mh = _read_csv_body(os.path.join(outdir, "memberships.csv"),
                               ["iter", "event_id", "cluster"])
    N = len(mrows) // B
    if len(mrows) != B * N:
        raise ConsistencyError("memberships.csv rows do not tile retained iterations")
    G = np.array([int(r[2]) for r in mrows], dtype=np.int32).reshape(B, N)

    qrows, qh = _read_csv_body(os.path.join(outdir, "weights.csv"),
                               ["iter", "cluster", "q"])
    if len(qrows) != B * M:
        raise ConsistencyError(f"weights.csv has {len(qrows)} rows, expected {B * M}")
    q = np.array([float(r[2]) for r in qrows]).reshape(B, M)

    expect = manifest.get("manifest_hash")
    for h in (mhash, ch, mh, qh):
        if h is not None and expect is not None and h != expect:
            raise ConsistencyError("output file hash does not match the run manifest")
    run = PosteriorRun(iters=iters, w_s=ws, w_t=wt, b_u=bu, n_nonempty=nne, G=G,
                       center_seg=cseg, center_off=coff, center_t=ct, q=q,
                       theta_accept_rate=float(manifest.get("result_theta_accept", "nan")),
                       center_accept_rate=float(manifest.get("result_center_accept", "nan")),
                       n_degenerate=int(manifest.get("result_degenerate_events", "0")),
                       cfg=cfg, wall_time=float(manifest.get("result_wall_time", "nan")))
    return run, expect or ""


def config_from_manifest(manifest: dict) -> FitConfig:
    def get(key, cast, default=None):
        if key not in manifest:
            if default is None:
                raise ConsistencyError(f"manifest missing key {key}")
            return default
        return cast(manifest[key])

    return FitConfig(
        max_clusters=get("cfg_max_clusters", int),
        iterations=get("cfg_iterations", int),
        burnin_frac=get("cfg_burnin_frac", float),
        thin=get("cfg_thin", int),
        step_log_ws=get("cfg_step_log_ws", float),
        step_log_wt=get("cfg_step_log_wt", float),
        concentration_rate=get("cfg_concentration_rate", float),
        w_s_bounds=(get("cfg_w_s_lo", float), get("cfg_w_s_hi", float)),
        w_t_max=get("cfg_w_t_max", float),
        mc_points=get("cfg_mc_points", int),
        pixel_rows=get("cfg_pixel_rows", int),
        pixel_cols=get("cfg_pixel_cols", int),
        weight_mode=get("cfg_weight_mode", str),
        init_w_s=get("cfg_init_w_s", float, 300.0),
        init_w_t=get("cfg_init_w_t", float, 0.2),
        seed=get("cfg_seed", int),
    )


def manifest_entries_from_config(cfg: FitConfig) -> dict:
    return {
        "cfg_max_clusters": cfg.max_clusters,
        "cfg_iterations": cfg.iterations,
        "cfg_burnin_frac": cfg.burnin_frac,
        "cfg_thin": cfg.thin,
        "cfg_step_log_ws": cfg.step_log_ws,
        "cfg_step_log_wt": cfg.step_log_wt,
        "cfg_concentration_rate": cfg.concentration_rate,
        "cfg_w_s_lo": cfg.w_s_bounds[0],
        "cfg_w_s_hi": cfg.w_s_bounds[1],
        "cfg_w_t_max": cfg.w_t_max,
        "cfg_mc_points": cfg.mc_points,
        "cfg_pixel_rows": cfg.pixel_rows,
        "cfg_pixel_cols": cfg.pixel_cols,
        "cfg_weight_mode": cfg.weight_mode,
        "cfg_init_w_s": cfg.init_w_s,
        "cfg_init_w_t": cfg.init_w_t,
        "cfg_seed": cfg.seed,
    }


def write_events_used(path, events: EventSet, raw, mhash: str) -> None:
    """Echo the projected, normalized events actually used by a fit."""
    with _open_out(path, mhash) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["event_id", "x", "y", "seg_id", "offset", "t", "raw_t"])
        for i in range(len(events)):
            w.writerow([i, _fmt(events.xy[i, 0]), _fmt(events.xy[i, 1]),
                        events.seg[i], _fmt(events.offset[i]),
                        _fmt(events.t[i]), _fmt(raw[i])])


def read_events_used(path, net: LinearNetwork) -> tuple[EventSet, np.ndarray]:
    rows, _ = _read_csv_body(path, ["event_id", "x", "y", "seg_id", "offset", "t", "raw_t"])
    seg = np.array([int(r[3]) for r in rows], dtype=np.int64)
    off = np.array([float(r[4]) for r in rows])
    t = np.array([float(r[5]) for r in rows])
    raw = np.array([float(r[6]) for r in rows])
    pts = net.points_from_arrays(seg, off)
    return EventSet(pts.seg, pts.offset, pts.xy, t), raw
