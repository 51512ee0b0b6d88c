"""Road-network geometry: construction, shortest paths, sampling, pixelation.

A network is a union of straight segments that meet at shared endpoint
vertices.  Locations on it are (segment, offset) pairs with offset in [0, 1]
measured from the segment's first endpoint.  All coordinates are metres.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterator, NamedTuple, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, dijkstra

from ._validation import as_float_array, as_generator, check_int, check_positive
from .errors import InputError

__all__ = [
    "Window",
    "NetPoint",
    "Event",
    "NetPointSet",
    "EventSet",
    "LinearNetwork",
    "PixelGrid",
    "build_network",
    "make_grid_network",
    "sample_uniform",
    "shortest_path_dist",
    "project_event",
    "pixelate",
    "equidistant_counts",
]

# Ingestion merges endpoint coordinates within this distance (metres).
VERTEX_MERGE_TOL = 1e-6


class Window(NamedTuple):
    """Axis-aligned bounding rectangle."""
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin


@dataclass(frozen=True)
class NetPoint:
    """A location on the network: host segment plus relative offset."""
    seg: int
    offset: float  # in [0, 1], from the segment's first endpoint
    x: float
    y: float

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class Event:
    """A located event with normalized time in [0, 1]."""
    point: NetPoint
    time: float
    raw_time: object = None  # original timestamp or float, if any


class NetPointSet:
    """Columnar container of network locations."""

    def __init__(self, seg: np.ndarray, offset: np.ndarray, xy: np.ndarray):
        self.seg = np.asarray(seg, dtype=np.int64)
        self.offset = np.asarray(offset, dtype=float)
        self.xy = np.asarray(xy, dtype=float)
        if not (len(self.seg) == len(self.offset) == len(self.xy)):
            raise InputError("seg, offset and xy must have equal lengths")

    def __len__(self) -> int:
        return len(self.seg)

    def __getitem__(self, i: int) -> NetPoint:
        return NetPoint(int(self.seg[i]), float(self.offset[i]),
                        float(self.xy[i, 0]), float(self.xy[i, 1]))

    def __iter__(self) -> Iterator[NetPoint]:
        return (self[i] for i in range(len(self)))


class EventSet(NetPointSet):
    """Network locations with event times (normalized to [0, 1] on ingest)."""

    def __init__(self, seg, offset, xy, t, raw_time=None):
        super().__init__(seg, offset, xy)
        self.t = np.asarray(t, dtype=float)
        if len(self.t) != len(self.seg):
            raise InputError("t must match the number of points")
        self.raw_time = raw_time

    @classmethod
    def from_points(cls, points: NetPointSet, t, raw_time=None) -> "EventSet":
        return cls(points.seg, points.offset, points.xy, t, raw_time)

    def __getitem__(self, i: int) -> Event:  # type: ignore[override]
        p = super().__getitem__(i)
        raw = None if self.raw_time is None else self.raw_time[i]
        return Event(p, float(self.t[i]), raw)

    def subset(self, idx) -> "EventSet":
        raw = None if self.raw_time is None else np.asarray(self.raw_time)[idx]
        return EventSet(self.seg[idx], self.offset[idx], self.xy[idx], self.t[idx], raw)


class LinearNetwork:
    """Immutable network of straight segments joined at shared vertices.

    Vertex-to-vertex shortest paths are solved on demand with Dijkstra and
    point queries are composed from segment offsets, so query points never
    mutate the stored graph.
    """

    def __init__(self, vertices: np.ndarray, segments: np.ndarray):
        vertices = as_float_array(vertices, "vertices", ndim=2, allow_empty=False)
        segments = np.asarray(segments, dtype=np.int64)
        if vertices.shape[1] != 2:
            raise InputError(f"vertices must be (V, 2), got {vertices.shape}")
        if segments.ndim != 2 or segments.shape[1] != 2:
            raise InputError(f"segments must be (S, 2), got {segments.shape}")
        if segments.size == 0:
            raise InputError("network has no segments")
        if segments.min() < 0 or segments.max() >= len(vertices):
            raise InputError("segment endpoint index out of range")

        p = vertices[segments[:, 0]]
        q = vertices[segments[:, 1]]
        lengths = np.hypot(*(q - p).T)
        if np.any(lengths <= 0):
            bad = int(np.flatnonzero(lengths <= 0)[0])
            raise InputError(f"segment {bad} has zero length")

        self.vertices = vertices
        self.segments = segments
        self.lengths = lengths
        self.total_length = float(lengths.sum())
        self.window = Window(float(vertices[:, 0].min()), float(vertices[:, 1].min()),
                             float(vertices[:, 0].max()), float(vertices[:, 1].max()))
        for arr in (self.vertices, self.segments, self.lengths):
            arr.setflags(write=False)
        self._graph = self._build_graph()
        self._component = connected_components(self._graph, directed=False)[1]

    # -- construction ------------------------------------------------------

    def _build_graph(self) -> csr_matrix:
        n = len(self.vertices)
        i = np.concatenate([self.segments[:, 0], self.segments[:, 1]])
        j = np.concatenate([self.segments[:, 1], self.segments[:, 0]])
        w = np.concatenate([self.lengths, self.lengths])
        # parallel edges between one vertex pair: keep the shortest
        key = i * np.int64(n) + j
        order = np.argsort(key, kind="stable")
        key, w = key[order], w[order]
        uniq, start = np.unique(key, return_index=True)
        wmin = np.minimum.reduceat(w, start)
        return csr_matrix((wmin, (uniq // n, uniq % n)), shape=(n, n))

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_segments(self) -> int:
        return len(self.segments)

    def point(self, seg: int, offset: float) -> NetPoint:
        seg = check_int(seg, "seg", minimum=0)
        if seg >= self.n_segments:
            raise InputError(f"seg {seg} out of range (network has {self.n_segments})")
        if not 0.0 <= offset <= 1.0:
            raise InputError(f"offset must be in [0, 1], got {offset}")
        a, b = self.segments[seg]
        xy = self.vertices[a] + offset * (self.vertices[b] - self.vertices[a])
        return NetPoint(seg, float(offset), float(xy[0]), float(xy[1]))

    def points_from_arrays(self, seg: np.ndarray, offset: np.ndarray) -> NetPointSet:
        seg = np.asarray(seg, dtype=np.int64)
        offset = np.asarray(offset, dtype=float)
        a = self.vertices[self.segments[seg, 0]]
        b = self.vertices[self.segments[seg, 1]]
        xy = a + offset[:, None] * (b - a)
        return NetPointSet(seg, offset, xy)

    # -- distances ---------------------------------------------------------

    def vertex_distances(self, sources: np.ndarray) -> np.ndarray:
        """Shortest-path distances (k, V) from the given vertex indices."""
        sources = np.atleast_1d(np.asarray(sources, dtype=np.int64))
        return dijkstra(self._graph, directed=False, indices=sources)

    def distances_to_vertices(self, points: NetPointSet) -> np.ndarray:
        """Network distance (n, V) from each point to every vertex."""
        ua = self.segments[points.seg, 0]
        va = self.segments[points.seg, 1]
        need = np.unique(np.concatenate([ua, va]))
        rows = self.vertex_distances(need)
        lookup = np.empty(self.n_vertices, dtype=np.int64)
        lookup[need] = np.arange(len(need))
        L = self.lengths[points.seg]
        d_u = points.offset * L
        d_v = (1.0 - points.offset) * L
        return np.minimum(d_u[:, None] + rows[lookup[ua]],
                          d_v[:, None] + rows[lookup[va]])

    def pairwise_distances(self, a: NetPointSet, b: NetPointSet | None = None) -> np.ndarray:
        """Shortest-path distance matrix (na, nb); inf across components."""
        symmetric = b is None
        if b is None:
            b = a
        d_av = self.distances_to_vertices(a)  # (na, V)
        ub, vb = self.segments[b.seg, 0], self.segments[b.seg, 1]
        Lb = self.lengths[b.seg]
        d = np.minimum(d_av[:, ub] + (b.offset * Lb)[None, :],
                       d_av[:, vb] + ((1.0 - b.offset) * Lb)[None, :])
        # points sharing a host segment can also connect directly along it
        same = a.seg[:, None] == b.seg[None, :]
        if np.any(same):
            ia, ib = np.nonzero(same)
            direct = np.abs(a.offset[ia] - b.offset[ib]) * self.lengths[a.seg[ia]]
            d[ia, ib] = np.minimum(d[ia, ib], direct)
        if symmetric:
            d = np.minimum(d, d.T)  # guard against asymmetric float noise
        return d

    # -- projection --------------------------------------------------------

    def project_many(self, xy: np.ndarray, cutoff: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Project planar points onto the network.

        Returns (seg, offset, dist); seg is -1 where the nearest network
        point is farther than `cutoff`.  Ties go to the lowest segment id.
        """
        xy = as_float_array(xy, "xy", ndim=2)
        check_positive(cutoff, "cutoff")
        p = self.vertices[self.segments[:, 0]]
        dvec = self.vertices[self.segments[:, 1]] - p  # (S, 2)
        len2 = np.einsum("ij,ij->i", dvec, dvec)
        seg = np.empty(len(xy), dtype=np.int64)
        off = np.empty(len(xy))
        dist = np.empty(len(xy))
        for lo in range(0, len(xy), 256):
            chunk = xy[lo:lo + 256]  # (c, 2)
            diff = chunk[:, None, :] - p[None, :, :]  # (c, S, 2)
            t = np.clip(np.einsum("csj,sj->cs", diff, dvec) / len2, 0.0, 1.0)
            res = diff - t[:, :, None] * dvec[None, :, :]
            d2 = np.einsum("csj,csj->cs", res, res)
            best = np.argmin(d2, axis=1)  # first (= lowest id) minimizer
            rows = np.arange(len(chunk))
            seg[lo:lo + len(chunk)] = best
            off[lo:lo + len(chunk)] = t[rows, best]
            dist[lo:lo + len(chunk)] = np.sqrt(d2[rows, best])
        seg[dist > cutoff] = -1
        return seg, off, dist


def build_network(source, merge_tol: float = VERTEX_MERGE_TOL) -> LinearNetwork:
    """Build a LinearNetwork from a CSV file or an (S, 4) coordinate array.

    The CSV must have header ``seg_id,x1,y1,x2,y2``.  Endpoints closer than
    `merge_tol` are merged into one vertex; zero-length segments are
    rejected with their row number.
    """
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        coords, rows = _read_network_csv(source)
    else:
        coords = as_float_array(source, "segment coordinates", ndim=2)
        if coords.shape[1] != 4:
            raise InputError(f"segment coordinates must be (S, 4), got {coords.shape}")
        rows = list(range(1, len(coords) + 1))
    if len(coords) == 0:
        raise InputError("network input contains no segments")

    # snap endpoints onto a merge_tol grid so nearby coordinates share a vertex
    pts = coords.reshape(-1, 2)
    keys = np.round(pts / merge_tol).astype(np.int64)
    _, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    vertices = pts[first]
    endpoints = inverse.reshape(-1, 2)
    degenerate = endpoints[:, 0] == endpoints[:, 1]
    if np.any(degenerate):
        bad = int(np.flatnonzero(degenerate)[0])
        raise InputError(f"zero-length segment at input row {rows[bad]}")
    return LinearNetwork(vertices, endpoints)


def _read_network_csv(path) -> tuple[np.ndarray, list[int]]:
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise InputError(f"cannot open network file {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise InputError(f"network file {path} is empty")
        expected = ["seg_id", "x1", "y1", "x2", "y2"]
        if [h.strip() for h in header] != expected:
            raise InputError(f"network file {path} must have header {','.join(expected)}")
        coords, rows = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise InputError(f"{path}: row {lineno} has {len(row)} fields, expected 5")
            try:
                coords.append([float(v) for v in row[1:]])
            except ValueError as exc:
                raise InputError(f"{path}: row {lineno}: {exc}") from exc
            rows.append(lineno)
    if not coords:
        raise InputError(f"network file {path} has no data rows")
    arr = np.asarray(coords)
    finite = np.isfinite(arr).all(axis=1)
    if not finite.all():
        bad = rows[int(np.flatnonzero(~finite)[0])]
        raise InputError(f"network file {path}: non-finite coordinate at row {bad}")
    return arr, rows


def make_grid_network(n_cells: int | tuple[int, int], spacing: float = 100.0,
                      origin: tuple[float, float] = (0.0, 0.0)) -> LinearNetwork:
    """Rectangular street grid: (nx, ny) cells of side `spacing`."""
    if isinstance(n_cells, tuple):
        nx, ny = n_cells
    else:
        nx = ny = n_cells
    nx, ny = check_int(nx, "nx", 1), check_int(ny, "ny", 1)
    spacing = check_positive(spacing, "spacing")
    x0, y0 = origin
    segs = []
    for iy in range(ny + 1):
        for ix in range(nx):
            segs.append([x0 + ix * spacing, y0 + iy * spacing,
                         x0 + (ix + 1) * spacing, y0 + iy * spacing])
    for ix in range(nx + 1):
        for iy in range(ny):
            segs.append([x0 + ix * spacing, y0 + iy * spacing,
                         x0 + ix * spacing, y0 + (iy + 1) * spacing])
    return build_network(np.asarray(segs, dtype=float))


def sample_uniform(net: LinearNetwork, n: int, rng) -> NetPointSet:
    """Draw n points uniformly by length: segment ~ length, offset ~ U(0,1)."""
    n = check_int(n, "n", minimum=0)
    rng = as_generator(rng)
    p = net.lengths / net.total_length
    seg = rng.choice(net.n_segments, size=n, p=p)
    off = rng.uniform(0.0, 1.0, size=n)
    return net.points_from_arrays(seg, off)


def project_event(net: LinearNetwork, xy, cutoff: float) -> NetPoint | None:
    """Nearest network point within `cutoff` metres, else None."""
    seg, off, _ = net.project_many(np.atleast_2d(np.asarray(xy, dtype=float)), cutoff)
    if seg[0] < 0:
        return None
    return net.point(int(seg[0]), float(off[0]))


def shortest_path_dist(net: LinearNetwork, a: NetPoint, b: NetPoint) -> float:
    """Shortest-path distance between two network points (inf if disconnected)."""
    pa = NetPointSet(np.array([a.seg]), np.array([a.offset]), np.array([[a.x, a.y]]))
    pb = NetPointSet(np.array([b.seg]), np.array([b.offset]), np.array([[b.x, b.y]]))
    return float(net.pairwise_distances(pa, pb)[0, 0])


# -- pixelation ------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PixelGrid:
    """Rectangular pixelation of the network window.

    Active cells are those containing positive network length; each carries a
    representative network point (midpoint of its longest in-cell piece).
    """
    rows: int
    cols: int
    window: Window
    active: np.ndarray          # (rows, cols) bool
    rep_points: NetPointSet     # one per active cell
    rep_cell: np.ndarray        # (A, 2) int: (iy, ix) per representative
    cell_lengths: np.ndarray    # (rows, cols) in-cell network length

    @property
    def n_active(self) -> int:
        return len(self.rep_points)


def _cell_index(vals: np.ndarray, lo: float, step: float, count: int) -> np.ndarray:
    if step == 0.0:
        return np.zeros(len(vals), dtype=np.int64)
    idx = np.floor((vals - lo) / step).astype(np.int64)
    return np.clip(idx, 0, count - 1)


def segment_cell_intervals(net: LinearNetwork, rows: int, cols: int,
                           window: Window | None = None):
    """Split every segment at grid lines.

    Yields (seg, iy, ix, t0, t1) sub-intervals in segment parameter units,
    each lying within a single grid cell (cell of the interval midpoint).
    """
    if window is None:
        window = net.window
    dx = window.width / cols
    dy = window.height / rows
    out_seg, out_iy, out_ix, out_t0, out_t1 = [], [], [], [], []
    for s in range(net.n_segments):
        a, b = net.segments[s]
        p, q = net.vertices[a], net.vertices[b]
        cuts = [0.0, 1.0]
        for lo, step, count, axis in ((window.xmin, dx, cols, 0), (window.ymin, dy, rows, 1)):
            if step == 0.0 or q[axis] == p[axis]:
                continue
            span = q[axis] - p[axis]
            # interior grid lines crossed by this segment
            k0 = int(np.ceil((min(p[axis], q[axis]) - lo) / step))
            k1 = int(np.floor((max(p[axis], q[axis]) - lo) / step))
            for k in range(max(k0, 1), min(k1, count - 1) + 1):
                t = (lo + k * step - p[axis]) / span
                if 0.0 < t < 1.0:
                    cuts.append(t)
        cuts = sorted(set(cuts))
        mids = np.array([(cuts[i] + cuts[i + 1]) / 2 for i in range(len(cuts) - 1)])
        if len(mids) == 0:
            continue
        mxy = p[None, :] + mids[:, None] * (q - p)[None, :]
        ix = _cell_index(mxy[:, 0], window.xmin, dx, cols)
        iy = _cell_index(mxy[:, 1], window.ymin, dy, rows)
        prev = None
        for i in range(len(mids)):
            t0, t1 = cuts[i], cuts[i + 1]
            if t1 <= t0:
                continue
            cell = (int(iy[i]), int(ix[i]))
            if prev is not None and cell == prev:
                out_t1[-1] = t1  # merge with previous piece in the same cell
            else:
                out_seg.append(s)
                out_iy.append(cell[0])
                out_ix.append(cell[1])
                out_t0.append(t0)
                out_t1.append(t1)
            prev = cell
    return (np.asarray(out_seg, dtype=np.int64), np.asarray(out_iy, dtype=np.int64),
            np.asarray(out_ix, dtype=np.int64), np.asarray(out_t0), np.asarray(out_t1))


def pixelate(net: LinearNetwork, rows: int, cols: int,
             window: Window | None = None) -> PixelGrid:
    """Flag grid cells containing network and pick a representative point each."""
    rows = check_int(rows, "rows", minimum=1)
    cols = check_int(cols, "cols", minimum=1)
    if window is None:
        window = net.window
    seg, iy, ix, t0, t1 = segment_cell_intervals(net, rows, cols, window)
    piece_len = (t1 - t0) * net.lengths[seg]

    active = np.zeros((rows, cols), dtype=bool)
    cell_lengths = np.zeros((rows, cols))
    np.logical_or.at(active, (iy, ix), piece_len > 0)
    np.add.at(cell_lengths, (iy, ix), piece_len)

    # representative: midpoint of the longest in-cell piece
    best: dict[tuple[int, int], tuple[float, int, float]] = {}
    for k in range(len(seg)):
        if piece_len[k] <= 0:
            continue
        cell = (int(iy[k]), int(ix[k]))
        cand = (float(piece_len[k]), int(seg[k]), float((t0[k] + t1[k]) / 2))
        if cell not in best or cand[0] > best[cell][0]:
            best[cell] = cand
    cells = sorted(best)
    rep_seg = np.array([best[c][1] for c in cells], dtype=np.int64)
    rep_off = np.array([best[c][2] for c in cells])
    rep_cell = np.array(cells, dtype=np.int64).reshape(-1, 2)
    reps = net.points_from_arrays(rep_seg, rep_off)
    return PixelGrid(rows, cols, window, active, reps, rep_cell, cell_lengths)


# -- equidistant location counts (disc boundaries) --------------------------


def _split_host(net: LinearNetwork, point_seg: int, point_off: float,
                d_verts: np.ndarray):
    """Per-segment endpoint distances with the source's host segment split in two."""
    da = d_verts[net.segments[:, 0]].copy()
    db = d_verts[net.segments[:, 1]].copy()
    L = net.lengths.copy()
    s = point_seg
    keep = np.ones(net.n_segments, dtype=bool)
    keep[s] = False
    extra_da, extra_db, extra_L = [], [], []
    off_len = point_off * L[s]
    if off_len > 0:
        extra_da.append(d_verts[net.segments[s, 0]])
        extra_db.append(0.0)
        extra_L.append(off_len)
    rem = L[s] - off_len
    if rem > 0:
        extra_da.append(0.0)
        extra_db.append(d_verts[net.segments[s, 1]])
        extra_L.append(rem)
    da = np.concatenate([da[keep], np.asarray(extra_da)])
    db = np.concatenate([db[keep], np.asarray(extra_db)])
    L = np.concatenate([L[keep], np.asarray(extra_L)])
    return da, db, L


def equidistant_counts(net: LinearNetwork, points: NetPointSet,
                       radii: np.ndarray) -> np.ndarray:
    """Count network locations at exactly radius r from each point.

    radii has shape (n, k): one row of query radii per point.  The count per
    segment enumerates crossings of the distance profile
    min(d_a + s, d_b + L - s); exact on any network.  Counts are floored at 1
    (the query radius of an actual point always has at least that point).
    """
    radii = np.asarray(radii, dtype=float)
    if radii.ndim != 2 or len(radii) != len(points):
        raise InputError(f"radii must be (n_points, k), got {radii.shape}")
    d_pv = net.distances_to_vertices(points)  # (n, V)
    out = np.empty(radii.shape, dtype=np.int64)
    for i in range(len(points)):
        da, db, L = _split_host(net, int(points.seg[i]), float(points.offset[i]), d_pv[i])
        ok = np.isfinite(da)  # unreachable components contribute nothing
        da, db, L = da[ok], db[ok], L[ok]
        peak = (da + db + L) / 2.0  # apex of the tent-shaped profile
        r = radii[i][:, None]  # (k, 1)
        c = ((da[None, :] < r) & (r <= peak[None, :])).sum(axis=1)
        c += ((db[None, :] < r) & (r <= peak[None, :])).sum(axis=1)
        out[i] = np.maximum(c, 1)
    return out
