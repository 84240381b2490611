"""Road network loading, geodesic helpers and route distance.

Segments are directed: a two-way street is two segment records with
reversed geometry. All distances are in meters on a sphere of radius
``EARTH_RADIUS``.
"""
from __future__ import annotations

import json
import math
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

EARTH_RADIUS = 6_371_000.0
UNREACHABLE = math.inf
# distances closer than this are treated as ties
TIE_EPS = 1e-9

# meters per degree of latitude
_M_PER_DEG = EARTH_RADIUS * math.pi / 180.0


class NetworkLoadError(ValueError):
    """Malformed network record."""


class NetworkStructureError(ValueError):
    """Network is syntactically valid but structurally inconsistent."""


class UndefinedBearingError(ValueError):
    pass


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lng: float

    def __post_init__(self):
        if not (-90.0 <= self.lat <= 90.0) or not (-180.0 <= self.lng <= 180.0):
            raise ValueError(f"coordinates out of range: {self.lat}, {self.lng}")


@dataclass(frozen=True)
class Intersection:
    id: str
    location: GeoPoint


@dataclass(frozen=True)
class RoadSegment:
    id: str
    start: str
    end: str
    geometry: tuple[GeoPoint, ...]
    length: float
    road_name: str | None = None


@dataclass(frozen=True)
class Projection:
    segment_id: str
    point: GeoPoint
    offset: float
    distance: float


# ---------------------------------------------------------------------------
# geodesic primitives


def direct_distance(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle (haversine) distance in meters."""
    return haversine(a.lat, a.lng, b.lat, b.lng)


def haversine(lat1: float, lng1: float, lat2: float, lng2: float) -> float:
    p1 = math.radians(lat1)
    p2 = math.radians(lat2)
    dp = p2 - p1
    dl = math.radians(lng2 - lng1)
    h = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * EARTH_RADIUS * math.asin(min(1.0, math.sqrt(h)))


def haversine_np(lat1, lng1, lat2, lng2):
    p1 = np.radians(lat1)
    p2 = np.radians(lat2)
    dp = p2 - p1
    dl = np.radians(np.subtract(lng2, lng1))
    h = np.sin(dp / 2) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dl / 2) ** 2
    return 2 * EARTH_RADIUS * np.arcsin(np.minimum(1.0, np.sqrt(h)))


def bearing(a: GeoPoint, b: GeoPoint) -> float:
    """Initial great-circle bearing from ``a`` to ``b``, degrees in [0, 360)."""
    if a == b:
        raise UndefinedBearingError(f"bearing undefined for identical points {a}")
    p1 = math.radians(a.lat)
    p2 = math.radians(b.lat)
    dl = math.radians(b.lng - a.lng)
    y = math.sin(dl) * math.cos(p2)
    x = math.cos(p1) * math.sin(p2) - math.sin(p1) * math.cos(p2) * math.cos(dl)
    deg = math.degrees(math.atan2(y, x)) % 360.0
    return 0.0 if deg == 360.0 else deg


def angle_diff(a: float, b: float) -> float:
    """Smallest absolute difference between two bearings, in [0, 180]."""
    d = abs(a - b) % 360.0
    return 360.0 - d if d > 180.0 else d


def polyline_length(points: Sequence[GeoPoint]) -> float:
    return sum(direct_distance(p, q) for p, q in zip(points, points[1:]))


def _project_onto_legs(lat, lng, a_lat, a_lng, b_lat, b_lng, swapped, cum, leg_len):
    """Project a point onto polyline legs.

    Legs are stored with canonically ordered endpoints (``swapped`` marks legs
    whose travel direction is b -> a). The foot point is found in a local
    equirectangular plane centred on the query point and measured back with
    haversine. Returns (distance, offset, foot_lat, foot_lng) arrays.
    """
    coslat = math.cos(math.radians(lat))
    ax = (a_lng - lng) * coslat
    ay = a_lat - lat
    dx = (b_lng - a_lng) * coslat
    dy = b_lat - a_lat
    den = dx * dx + dy * dy
    safe = np.where(den > 0, den, 1.0)
    t = np.where(den > 0, -(ax * dx + ay * dy) / safe, 0.0)
    t = np.clip(t, 0.0, 1.0)
    plat = a_lat + t * (b_lat - a_lat)
    plng = a_lng + t * (b_lng - a_lng)
    dist = haversine_np(lat, lng, plat, plng)
    t_dir = np.where(swapped, 1.0 - t, t)
    offset = cum + t_dir * leg_len
    return dist, offset, plat, plng


def project_point(p: GeoPoint, segment: RoadSegment) -> Projection:
    """Closest point of ``segment``'s polyline to ``p`` (ties go to the smaller offset)."""
    pts = segment.geometry
    a_lat, a_lng, b_lat, b_lng, swapped, cum, leg_len = [], [], [], [], [], [], []
    acc = 0.0
    for u, v in zip(pts, pts[1:]):
        swap = (v.lat, v.lng) < (u.lat, u.lng)
        lo, hi = (v, u) if swap else (u, v)
        a_lat.append(lo.lat)
        a_lng.append(lo.lng)
        b_lat.append(hi.lat)
        b_lng.append(hi.lng)
        swapped.append(swap)
        cum.append(acc)
        d = direct_distance(u, v)
        leg_len.append(d)
        acc += d
    dist, offset, plat, plng = _project_onto_legs(
        p.lat, p.lng, np.array(a_lat), np.array(a_lng), np.array(b_lat), np.array(b_lng),
        np.array(swapped), np.array(cum), np.array(leg_len))
    best = 0
    for k in range(1, len(dist)):
        if dist[k] < dist[best] - TIE_EPS or (dist[k] <= dist[best] + TIE_EPS and offset[k] < offset[best]):
            best = k
    off = min(max(float(offset[best]), 0.0), segment.length)
    return Projection(segment.id, GeoPoint(float(plat[best]), float(plng[best])), off, float(dist[best]))


# ---------------------------------------------------------------------------
# network


class RoadNetwork:
    """Immutable directed road graph with a grid spatial index over segment legs.

    Route distances are served from a bounded single-source Dijkstra per
    intersection, cached on the instance. The cache never changes query
    results, so the network remains logically immutable.
    """

    def __init__(self, intersections: Iterable[Intersection], segments: Iterable[RoadSegment],
                 cell_deg: float = 0.005, route_cache_size: int = 4096):
        self._intersections: dict[str, Intersection] = {}
        for node in intersections:
            if node.id in self._intersections:
                raise NetworkStructureError(f"duplicate intersection id {node.id!r}")
            self._intersections[node.id] = node
        self._segments: dict[str, RoadSegment] = {}
        for seg in segments:
            if seg.id in self._segments:
                raise NetworkStructureError(f"duplicate segment id {seg.id!r}")
            for end in (seg.start, seg.end):
                if end not in self._intersections:
                    raise NetworkStructureError(
                        f"segment {seg.id!r} references unknown intersection {end!r}")
            if len(seg.geometry) < 2:
                raise NetworkStructureError(f"segment {seg.id!r} has fewer than 2 points")
            self._segments[seg.id] = seg

        self.segment_ids: list[str] = sorted(self._segments)
        self._seg_index = {sid: k for k, sid in enumerate(self.segment_ids)}
        self.node_ids: list[str] = sorted(self._intersections)
        self._node_index = {nid: k for k, nid in enumerate(self.node_ids)}
        self._build_legs()
        self._build_grid(cell_deg)
        self._build_graph()
        self._route_cache: OrderedDict[int, tuple[float, np.ndarray]] = OrderedDict()
        self._route_cache_size = route_cache_size

    # -- accessors ---------------------------------------------------------

    @property
    def intersections(self) -> dict[str, Intersection]:
        return dict(self._intersections)

    @property
    def segments(self) -> dict[str, RoadSegment]:
        return dict(self._segments)

    def segment(self, segment_id: str) -> RoadSegment:
        return self._segments[segment_id]

    def intersection(self, node_id: str) -> Intersection:
        return self._intersections[node_id]

    def __len__(self):
        return len(self._segments)

    def segments_of_road(self, road_name: str) -> list[RoadSegment]:
        return [self._segments[s] for s in self.segment_ids
                if self._segments[s].road_name == road_name]

    def outgoing(self, node_id: str) -> list[RoadSegment]:
        return [self._segments[s] for s in self._out.get(node_id, [])]

    def incoming(self, node_id: str) -> list[RoadSegment]:
        return [self._segments[s] for s in self._in.get(node_id, [])]

    # -- construction ------------------------------------------------------

    def _build_legs(self):
        a_lat, a_lng, b_lat, b_lng, seg, cum, length, swapped = [], [], [], [], [], [], [], []
        for k, sid in enumerate(self.segment_ids):
            pts = self._segments[sid].geometry
            acc = 0.0
            for p, q in zip(pts, pts[1:]):
                d = direct_distance(p, q)
                # canonical endpoint order so twin legs of a two-way road project identically
                swap = (q.lat, q.lng) < (p.lat, p.lng)
                lo, hi = (q, p) if swap else (p, q)
                a_lat.append(lo.lat)
                a_lng.append(lo.lng)
                b_lat.append(hi.lat)
                b_lng.append(hi.lng)
                swapped.append(swap)
                seg.append(k)
                cum.append(acc)
                length.append(d)
                acc += d
        self._leg_a_lat = np.array(a_lat, dtype=float)
        self._leg_a_lng = np.array(a_lng, dtype=float)
        self._leg_b_lat = np.array(b_lat, dtype=float)
        self._leg_b_lng = np.array(b_lng, dtype=float)
        self._leg_swapped = np.array(swapped, dtype=bool)
        self._leg_seg = np.array(seg, dtype=np.int64)
        self._leg_cum = np.array(cum, dtype=float)
        self._leg_len = np.array(length, dtype=float)
        self._seg_length = np.array([self._segments[s].length for s in self.segment_ids], dtype=float)
        self._seg_legs: dict[int, np.ndarray] = {}
        for k in range(len(self.segment_ids)):
            self._seg_legs[k] = np.flatnonzero(self._leg_seg == k)

    def _build_grid(self, cell_deg: float):
        self._cell = cell_deg
        grid: dict[tuple[int, int], list[int]] = {}
        for i in range(len(self._leg_seg)):
            lat0, lat1 = sorted((self._leg_a_lat[i], self._leg_b_lat[i]))
            lng0, lng1 = sorted((self._leg_a_lng[i], self._leg_b_lng[i]))
            for cy in range(math.floor(lat0 / cell_deg), math.floor(lat1 / cell_deg) + 1):
                for cx in range(math.floor(lng0 / cell_deg), math.floor(lng1 / cell_deg) + 1):
                    grid.setdefault((cy, cx), []).append(i)
        self._grid = {key: np.array(v, dtype=np.int64) for key, v in grid.items()}

    def _build_graph(self):
        self._out: dict[str, list[str]] = {}
        self._in: dict[str, list[str]] = {}
        best: dict[tuple[int, int], float] = {}
        for sid in self.segment_ids:
            seg = self._segments[sid]
            self._out.setdefault(seg.start, []).append(sid)
            self._in.setdefault(seg.end, []).append(sid)
            key = (self._node_index[seg.start], self._node_index[seg.end])
            if key[0] == key[1]:
                continue
            best[key] = min(best.get(key, math.inf), seg.length)
        n = len(self.node_ids)
        if best:
            rows, cols = zip(*best)
            self._graph = csr_matrix((list(best.values()), (rows, cols)), shape=(n, n))
        else:
            self._graph = csr_matrix((n, n))
        self._seg_start_idx = np.array(
            [self._node_index[self._segments[s].start] for s in self.segment_ids], dtype=np.int64)
        self._seg_end_idx = np.array(
            [self._node_index[self._segments[s].end] for s in self.segment_ids], dtype=np.int64)

    # -- projection --------------------------------------------------------

    def _project_legs(self, lat: float, lng: float, legs: np.ndarray):
        return _project_onto_legs(
            lat, lng, self._leg_a_lat[legs], self._leg_a_lng[legs], self._leg_b_lat[legs],
            self._leg_b_lng[legs], self._leg_swapped[legs], self._leg_cum[legs], self._leg_len[legs])

    def _best_per_segment(self, lat: float, lng: float, legs: np.ndarray):
        """Per-segment minimum-distance projection; ties resolve to the lower offset."""
        if len(legs) == 0:
            return []
        dist, offset, plat, plng = self._project_legs(lat, lng, legs)
        seg = self._leg_seg[legs]
        order = np.lexsort((offset, dist, seg))
        out = []
        n = len(order)
        i = 0
        while i < n:
            s = seg[order[i]]
            best = order[i]
            j = i + 1
            while j < n and seg[order[j]] == s:
                k = order[j]
                if dist[k] <= dist[order[i]] + TIE_EPS and offset[k] < offset[best]:
                    best = k
                j += 1
            i = j
            off = min(max(float(offset[best]), 0.0), float(self._seg_length[s]))
            out.append(Projection(self.segment_ids[s], GeoPoint(float(plat[best]), float(plng[best])),
                                  off, float(dist[best])))
        return out

    def project(self, p: GeoPoint, segment_id: str) -> Projection:
        return self._best_per_segment(p.lat, p.lng, self._seg_legs[self._seg_index[segment_id]])[0]

    def _legs_near(self, lat: float, lng: float, radius: float) -> np.ndarray:
        # generous margin: the grid is in degrees while the radius is geodesic
        dlat = radius * 1.01 / _M_PER_DEG + 1e-9
        dlng = radius * 1.01 / (_M_PER_DEG * max(math.cos(math.radians(abs(lat) + dlat)), 1e-6)) + 1e-9
        c = self._cell
        y0, y1 = math.floor((lat - dlat) / c), math.floor((lat + dlat) / c)
        x0, x1 = math.floor((lng - dlng) / c), math.floor((lng + dlng) / c)
        found = [self._grid[(cy, cx)] for cy in range(y0, y1 + 1) for cx in range(x0, x1 + 1)
                 if (cy, cx) in self._grid]
        if not found:
            return np.empty(0, dtype=np.int64)
        return np.unique(np.concatenate(found))

    def nearest_segments(self, p: GeoPoint, radius: float) -> list[Projection]:
        """All segment projections within ``radius`` meters, nearest first (ties by id)."""
        if radius <= 0:
            raise ValueError("radius must be positive")
        legs = self._legs_near(p.lat, p.lng, radius)
        projs = [q for q in self._best_per_segment(p.lat, p.lng, legs) if q.distance <= radius]
        projs.sort(key=lambda q: (q.distance, q.segment_id))
        return projs

    def nearest_segment(self, p: GeoPoint, max_distance: float = math.inf) -> Projection | None:
        """Closest segment projection, or None when nothing lies within ``max_distance``."""
        radius = max_distance if math.isfinite(max_distance) else 1_000.0
        while True:
            found = self.nearest_segments(p, radius)
            if found:
                return found[0]
            if math.isfinite(max_distance) or radius > 4 * EARTH_RADIUS or not self._segments:
                return None
            radius *= 4

    # -- routing -----------------------------------------------------------

    def _node_row(self, node: int, bound: float) -> np.ndarray:
        cached = self._route_cache.get(node)
        if cached is not None and cached[0] >= bound:
            self._route_cache.move_to_end(node)
            return cached[1]
        limit = bound if not cached else max(bound, 2 * cached[0])
        row = dijkstra(self._graph, directed=True, indices=node,
                       limit=limit if math.isfinite(limit) else np.inf)
        self._route_cache[node] = (limit, row)
        if len(self._route_cache) > self._route_cache_size:
            self._route_cache.popitem(last=False)
        return row

    def node_distance(self, a: str, b: str, bound: float = math.inf) -> float:
        """Shortest path length between two intersections (inf when beyond ``bound``)."""
        d = float(self._node_row(self._node_index[a], bound)[self._node_index[b]])
        return d if d <= bound else UNREACHABLE

    def route_distance(self, a: Projection, b: Projection, bound: float = math.inf,
                       backward_tol: float = 0.0) -> float:
        """Along-road distance from projection ``a`` to projection ``b``.

        Returns ``UNREACHABLE`` when no path exists (or it is longer than
        ``bound``). A move of up to ``backward_tol`` meters backwards along the
        same segment counts as its absolute length instead of a detour, which
        absorbs GPS jitter of a stationary vehicle.
        """
        if a.segment_id == b.segment_id and b.offset >= a.offset - backward_tol:
            d = abs(b.offset - a.offset)
            return d if d <= bound else UNREACHABLE
        sa = self._segments[a.segment_id]
        sb = self._segments[b.segment_id]
        head = sa.length - a.offset
        middle = self.node_distance(sa.end, sb.start, max(bound - head - b.offset, 0.0))
        d = head + middle + b.offset
        return d if d <= bound else UNREACHABLE

    def route_matrix(self, src: Sequence[Projection], dst: Sequence[Projection],
                     bound: float = math.inf, backward_tol: float = 0.0) -> np.ndarray:
        """Vectorised ``route_distance`` for all pairs (rows = src, cols = dst)."""
        s_idx = np.array([self._seg_index[p.segment_id] for p in src], dtype=np.int64)
        d_idx = np.array([self._seg_index[p.segment_id] for p in dst], dtype=np.int64)
        s_off = np.array([p.offset for p in src])
        d_off = np.array([p.offset for p in dst])
        head = self._seg_length[s_idx] - s_off
        rows = np.empty((len(src), len(dst)))
        start_nodes = self._seg_start_idx[d_idx]
        for i, node in enumerate(self._seg_end_idx[s_idx]):
            rows[i] = self._node_row(int(node), bound)[start_nodes]
        out = head[:, None] + rows + d_off[None, :]
        same = (s_idx[:, None] == d_idx[None, :]) & (d_off[None, :] >= s_off[:, None] - backward_tol)
        out = np.where(same, np.abs(d_off[None, :] - s_off[:, None]), out)
        out[out > bound] = np.inf
        return out


# ---------------------------------------------------------------------------
# loading


def _parse_point(token: str, lineno: int) -> GeoPoint:
    try:
        lat, lng = token.split(":")
        return GeoPoint(float(lat), float(lng))
    except ValueError as exc:
        raise NetworkLoadError(f"line {lineno}: bad coordinate {token!r}") from exc


def parse_network(lines: Iterable[str]) -> RoadNetwork:
    nodes: list[Intersection] = []
    raw_segments: list[tuple[int, str, str, str, tuple[GeoPoint, ...], str | None]] = []
    for lineno, line in enumerate(lines, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        kind = parts[0]
        if kind == "N":
            if len(parts) != 4:
                raise NetworkLoadError(f"line {lineno}: node record needs 4 fields")
            try:
                nodes.append(Intersection(parts[1], GeoPoint(float(parts[2]), float(parts[3]))))
            except ValueError as exc:
                raise NetworkLoadError(f"line {lineno}: {exc}") from exc
        elif kind == "S":
            if len(parts) < 5:
                raise NetworkLoadError(f"line {lineno}: segment record needs at least 5 fields")
            geometry = tuple(_parse_point(tok, lineno) for tok in parts[4].split(";") if tok)
            if len(geometry) < 2:
                raise NetworkLoadError(f"line {lineno}: segment polyline needs 2 or more points")
            name = ",".join(parts[5:]) or None
            raw_segments.append((lineno, parts[1], parts[2], parts[3], geometry, name))
        else:
            raise NetworkLoadError(f"line {lineno}: unknown record type {kind!r}")
    segments = [RoadSegment(sid, a, b, geom, polyline_length(geom), name)
                for _, sid, a, b, geom, name in raw_segments]
    return RoadNetwork(nodes, segments)


def load_network(source: str | Path) -> RoadNetwork:
    """Read the line-oriented network format (``N,...`` / ``S,...`` records)."""
    with open(source, encoding="utf-8") as fh:
        return parse_network(fh)


def write_network(net: RoadNetwork, dest: str | Path) -> None:
    with open(dest, "w", encoding="utf-8") as fh:
        for nid in net.node_ids:
            node = net.intersection(nid)
            fh.write(f"N,{nid},{node.location.lat!r},{node.location.lng!r}\n")
        for sid in net.segment_ids:
            seg = net.segment(sid)
            geom = ";".join(f"{p.lat!r}:{p.lng!r}" for p in seg.geometry)
            name = f",{seg.road_name}" if seg.road_name else ""
            fh.write(f"S,{sid},{seg.start},{seg.end},{geom}{name}\n")


def network_from_geojson(source: str | Path, snap: float = 1e-7) -> RoadNetwork:
    """Import a FeatureCollection of LineStrings with ``id``/``from``/``to``/``name`` properties.

    Intersections are created from line endpoints; endpoints closer than ``snap``
    degrees to an existing node with the same id must agree.
    """
    doc = json.loads(Path(source).read_text(encoding="utf-8"))
    nodes: dict[str, GeoPoint] = {}
    segments = []
    for k, feat in enumerate(doc.get("features", [])):
        geom = feat.get("geometry") or {}
        if geom.get("type") != "LineString":
            raise NetworkLoadError(f"feature {k}: expected LineString geometry")
        props = feat.get("properties") or {}
        try:
            sid, a, b = str(props["id"]), str(props["from"]), str(props["to"])
        except KeyError as exc:
            raise NetworkLoadError(f"feature {k}: missing property {exc}") from exc
        pts = tuple(GeoPoint(float(c[1]), float(c[0])) for c in geom["coordinates"])
        if len(pts) < 2:
            raise NetworkLoadError(f"feature {k}: LineString needs 2 or more positions")
        for nid, p in ((a, pts[0]), (b, pts[-1])):
            prev = nodes.setdefault(nid, p)
            if abs(prev.lat - p.lat) > snap or abs(prev.lng - p.lng) > snap:
                raise NetworkStructureError(f"feature {k}: node {nid!r} has inconsistent location")
        segments.append(RoadSegment(sid, a, b, pts, polyline_length(pts), props.get("name")))
    return RoadNetwork([Intersection(n, p) for n, p in nodes.items()], segments)
