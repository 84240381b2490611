"""Synthetic grid city with planted traffic violations and ground truth.

The city is a ``rows x cols`` grid of two-way streets. Vehicles drive random
lawful routes; a configurable share of trips is routed to commit one planted
violation (forbidden turn, parking next to a no-parking sign, or speeding
along a road). One site per violation kind is a hotspot whose selection
weight is ``hotspot_factor`` times that of the other sites.

Every violation committed is written to the ground-truth file, computed from
the exact simulated motion rather than from the planted intent.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .behaviors import TurnType, classify_turn
from .restrictions import FORBIDS, SignRecord, SignType, SpeedLimit, write_sign_inventory, write_speed_limits
from .roadnet import EARTH_RADIUS, GeoPoint, Intersection, RoadNetwork, RoadSegment, polyline_length, write_network

EPOCH_2016_09_01 = 1472688000.0
_TURN_SIGN = {v: k for k, v in FORBIDS.items()}


@dataclass(frozen=True)
class SynthSpec:
    rows: int = 4
    cols: int = 4
    block_m: float = 200.0
    n_trajectories: int = 300
    noise_sigma: float = 5.0
    spacing_m: float = 30.0
    days: int = 7
    seed: int = 0
    n_turn_signs: int = 6
    n_parking_signs: int = 6
    illegal_turn_rate: float = 0.2
    illegal_parking_rate: float = 0.2
    speeding_rate: float = 0.2
    lawful_parking_rate: float = 0.05
    hotspot_factor: float = 10.0
    speed_limit_kmh: float = 50.0
    cruise_kmh: tuple[float, float] = (25.0, 40.0)
    speeding_kmh: tuple[float, float] = (70.0, 90.0)
    park_seconds: tuple[float, float] = (300.0, 900.0)
    park_fix_interval: float = 30.0
    zeta: float = 50.0
    origin: tuple[float, float] = (24.48, 118.09)
    start_epoch: float = EPOCH_2016_09_01
    lawful_hours: tuple[int, ...] = tuple(range(6, 23))
    # hour-of-day windows in which each kind of planted violation happens
    kind_hours: dict = field(default_factory=lambda: {
        "illegal_turn": (7, 8, 9), "illegal_parking": (12, 13, 14), "speeding": (21, 22, 23)})
    route_segments: tuple[int, int] = (3, 6)

    def __post_init__(self):
        if self.rows < 2 or self.cols < 2:
            raise ValueError("grid needs at least 2 x 2 intersections")
        for name in ("block_m", "spacing_m", "park_fix_interval", "hotspot_factor", "speed_limit_kmh"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        rates = (self.illegal_turn_rate, self.illegal_parking_rate, self.speeding_rate, self.lawful_parking_rate)
        if min(rates) < 0 or sum(rates) > 1:
            raise ValueError("trip-type rates must be non-negative and sum to at most 1")
        if self.noise_sigma < 0 or self.n_trajectories < 0 or self.days < 1:
            raise ValueError("noise_sigma, n_trajectories must be >= 0 and days >= 1")


@dataclass(frozen=True)
class TurnSite:
    node: str
    approach: str  # incoming segment id
    forbidden: TurnType
    sign: SignRecord


@dataclass(frozen=True)
class ZoneSite:
    segment_id: str  # lower id of the twin pair
    twin_id: str
    sign_offset: float  # along segment_id
    sign: SignRecord


@dataclass(frozen=True)
class TruthViolation:
    kind: str
    location_ref: str
    lat: float
    lng: float
    t: float
    traj_id: str


@dataclass
class SynthCity:
    spec: SynthSpec
    net: RoadNetwork
    xy: dict[str, tuple[float, float]]  # node id -> local east/north meters
    turn_sites: list[TurnSite]
    zone_sites: list[ZoneSite]
    roads: list[str]
    hotspots: dict[str, str]
    limits: list[SpeedLimit]
    fixes: list[tuple[str, float, float, float, str]] = field(default_factory=list)  # traj, t, lat, lng, truth seg
    truth: list[TruthViolation] = field(default_factory=list)
    trip_kinds: dict[str, str] = field(default_factory=dict)

    @property
    def signs(self) -> list[SignRecord]:
        return [s.sign for s in self.turn_sites] + [z.sign for z in self.zone_sites]


class _Frame:
    """Equirectangular local meters around the city origin."""

    def __init__(self, lat0: float, lng0: float):
        self.lat0, self.lng0 = lat0, lng0
        self.k = EARTH_RADIUS * math.pi / 180.0
        self.c = math.cos(math.radians(lat0))

    def geo(self, x: float, y: float) -> GeoPoint:
        return GeoPoint(float(self.lat0 + y / self.k), float(self.lng0 + x / (self.k * self.c)))


def _node_id(r: int, c: int) -> str:
    return f"n{r}_{c}"


def _build_grid(spec: SynthSpec, frame: _Frame):
    xy = {_node_id(r, c): (c * spec.block_m, r * spec.block_m) for r in range(spec.rows) for c in range(spec.cols)}
    nodes = [Intersection(n, frame.geo(*p)) for n, p in xy.items()]
    pairs = []
    for r in range(spec.rows):
        for c in range(spec.cols - 1):
            pairs.append((_node_id(r, c), _node_id(r, c + 1), f"Row {r} Road"))
    for c in range(spec.cols):
        for r in range(spec.rows - 1):
            pairs.append((_node_id(r, c), _node_id(r + 1, c), f"Col {c} Avenue"))
    segments = []
    k = 0
    for a, b, name in pairs:
        for u, v in ((a, b), (b, a)):
            (x0, y0), (x1, y1) = xy[u], xy[v]
            geom = (frame.geo(x0, y0), frame.geo((x0 + x1) / 2, (y0 + y1) / 2), frame.geo(x1, y1))
            segments.append(RoadSegment(f"s{k:04d}", u, v, geom, polyline_length(geom), name))
            k += 1
    return xy, RoadNetwork(nodes, segments)


def _seg_bearing(xy, seg: RoadSegment) -> float:
    (x0, y0), (x1, y1) = xy[seg.start], xy[seg.end]
    return math.degrees(math.atan2(x1 - x0, y1 - y0)) % 360.0


class _Planner:
    def __init__(self, city: SynthCity, rng: np.random.Generator):
        self.city = city
        self.net = city.net
        self.rng = rng
        self.forbidden = {(s.approach, s.forbidden) for s in city.turn_sites}

    def turn_type(self, a: str, b: str) -> TurnType:
        xy = self.city.xy
        return classify_turn(_seg_bearing(xy, self.net.segment(a)), _seg_bearing(xy, self.net.segment(b)), 5.0)

    def lawful(self, a: str, b: str) -> bool:
        kind = self.turn_type(a, b)
        return kind is not TurnType.U_TURN and (a, kind) not in self.forbidden

    def forward(self, seg: str, n: int) -> list[str]:
        out = []
        cur = seg
        for _ in range(n):
            options = [s.id for s in self.net.outgoing(self.net.segment(cur).end) if self.lawful(cur, s.id)]
            if not options:
                break
            cur = options[self.rng.integers(len(options))]
            out.append(cur)
        return out

    def backward(self, seg: str, n: int) -> list[str]:
        out = []
        cur = seg
        for _ in range(n):
            options = [s.id for s in self.net.incoming(self.net.segment(cur).start) if self.lawful(s.id, cur)]
            if not options:
                break
            cur = options[self.rng.integers(len(options))]
            out.append(cur)
        return out[::-1]


def _place_signs(spec: SynthSpec, city_net: RoadNetwork, xy, frame: _Frame, rng: np.random.Generator):
    planner_forbidden: list[TurnSite] = []
    nodes = sorted(xy)
    order = rng.permutation(len(nodes))
    for idx in order[:spec.n_turn_signs]:
        node = nodes[idx]
        approaches = city_net.incoming(node)
        a = approaches[rng.integers(len(approaches))]
        b_bearing = _seg_bearing(xy, a)
        possible = sorted({classify_turn(b_bearing, _seg_bearing(xy, s), 5.0) for s in city_net.outgoing(node)}
                          - {TurnType.STRAIGHT}, key=lambda t: t.value)
        forbidden = possible[rng.integers(len(possible))]
        (x0, y0), (x1, y1) = xy[a.start], xy[a.end]
        ux, uy = (x1 - x0) / spec.block_m, (y1 - y0) / spec.block_m
        back = 20.0
        sx, sy = x1 - ux * back + uy * 4.0, y1 - uy * back - ux * 4.0  # 20 m before, 4 m to the right
        sign = SignRecord(_TURN_SIGN[forbidden], frame.geo(sx, sy), round(b_bearing, 6) % 360.0)
        planner_forbidden.append(TurnSite(node, a.id, forbidden, sign))
    if len(planner_forbidden) < spec.n_turn_signs:
        raise ValueError("grid too small for the requested number of turn signs")

    pairs = sorted({tuple(sorted((s.id, t.id))) for s in city_net.segments.values()
                    for t in city_net.outgoing(s.end) if t.end == s.start})
    if spec.n_parking_signs > len(pairs):
        raise ValueError("grid too small for the requested number of no-parking signs")
    zones = []
    for idx in rng.permutation(len(pairs))[:spec.n_parking_signs]:
        sid, twin = pairs[idx]
        seg = city_net.segment(sid)
        off = float(rng.uniform(0.3, 0.7) * spec.block_m)
        (x0, y0), (x1, y1) = xy[seg.start], xy[seg.end]
        ux, uy = (x1 - x0) / spec.block_m, (y1 - y0) / spec.block_m
        sx, sy = x0 + ux * off + uy * 6.0, y0 + uy * off - ux * 6.0
        zones.append(ZoneSite(sid, twin, off, SignRecord(SignType.NO_PARKING, frame.geo(sx, sy), None)))
    return planner_forbidden, zones


def build_city(spec: SynthSpec) -> SynthCity:
    """Grid network, planted signs and limits (no trips yet)."""
    rng = np.random.default_rng([spec.seed, 1])
    frame = _Frame(*spec.origin)
    xy, net = _build_grid(spec, frame)
    turn_sites, zone_sites = _place_signs(spec, net, xy, frame, rng)
    roads = sorted({s.road_name for s in net.segments.values()})
    hotspots = {
        "illegal_turn": turn_sites[0].node if turn_sites else "",
        "illegal_parking": zone_sites[0].segment_id if zone_sites else "",
        "speeding": roads[int(rng.integers(len(roads)))],
    }
    limits = [SpeedLimit(r, spec.speed_limit_kmh) for r in roads]
    return SynthCity(spec, net, xy, turn_sites, zone_sites, roads, hotspots, limits)


# ---------------------------------------------------------------------------
# trips


@dataclass
class _Trip:
    route: list[str]
    start_off: float
    end_off: float
    speeds: list[float]  # m/s per route segment
    stops: list[tuple[int, float, float]] = field(default_factory=list)  # (route index, offset, seconds)


def _weights(n: int, factor: float, hot: int = 0) -> np.ndarray:
    w = np.ones(n)
    if n:
        w[hot] = factor
    return w / w.sum()


def _plan_trip(kind: str, pl: _Planner, spec: SynthSpec, rng: np.random.Generator) -> _Trip | None:
    city = pl.city
    net = pl.net
    cruise = lambda: float(rng.uniform(*spec.cruise_kmh)) / 3.6  # noqa: E731
    lo, hi = spec.route_segments

    if kind == "illegal_turn":
        site = city.turn_sites[rng.choice(len(city.turn_sites), p=_weights(len(city.turn_sites), spec.hotspot_factor))]
        exits = [s.id for s in net.outgoing(site.node) if pl.turn_type(site.approach, s.id) is site.forbidden]
        b = exits[rng.integers(len(exits))]
        route = pl.backward(site.approach, int(rng.integers(1, 3))) + [site.approach, b]
        route += pl.forward(b, int(rng.integers(1, 3)))
    elif kind in ("illegal_parking", "lawful_parking"):
        if kind == "illegal_parking":
            zone = city.zone_sites[rng.choice(len(city.zone_sites),
                                              p=_weights(len(city.zone_sites), spec.hotspot_factor))]
            seg = zone.segment_id if rng.random() < 0.5 else zone.twin_id
            sign_off = zone.sign_offset if seg == zone.segment_id else spec.block_m - zone.sign_offset
            off = float(np.clip(sign_off + rng.uniform(-15.0, 15.0), 20.0, spec.block_m - 20.0))
        else:
            zoned = {z.segment_id for z in city.zone_sites} | {z.twin_id for z in city.zone_sites}
            free = [s for s in net.segment_ids if s not in zoned]
            seg = free[rng.integers(len(free))]
            off = float(rng.uniform(0.35, 0.65) * spec.block_m)
        pre = pl.backward(seg, int(rng.integers(1, 3)))
        route = pre + [seg] + pl.forward(seg, int(rng.integers(1, 3)))
        trip = _Trip(route, float(rng.uniform(0, spec.block_m / 2)), float(rng.uniform(spec.block_m / 2,
                     spec.block_m)), [cruise()] * len(route))
        trip.stops.append((len(pre), off, float(rng.uniform(*spec.park_seconds))))
        return trip
    elif kind == "speeding":
        road = city.roads[rng.choice(len(city.roads), p=_weights(len(city.roads), spec.hotspot_factor,
                                                               city.roads.index(city.hotspots["speeding"])))]
        first = int(rng.integers(2))
        for direction in (first, 1 - first):
            chain = _road_chain(net.segments_of_road(road), direction)
            pre = pl.backward(chain[0], 1)
            post = pl.forward(chain[-1], 1)
            if pre and post:
                break
        else:
            return None
        fast = float(rng.uniform(*spec.speeding_kmh)) / 3.6
        route = pre + chain + post
        speeds = [cruise()] + [fast] * len(chain) + [cruise()]
        return _Trip(route, float(rng.uniform(0, spec.block_m / 2)), float(rng.uniform(spec.block_m / 2,
                     spec.block_m)), speeds)
    else:
        net_ids = net.segment_ids
        first = net_ids[rng.integers(len(net_ids))]
        route = [first] + pl.forward(first, int(rng.integers(lo, hi + 1)) - 1)
    v = cruise()
    return _Trip(route, float(rng.uniform(0, spec.block_m / 2)), float(rng.uniform(spec.block_m / 2, spec.block_m)),
                 [v] * len(route))


def _road_chain(segs: list[RoadSegment], direction: int) -> list[str]:
    """Directed segments of a straight two-way road, end to end, starting from terminal ``direction``."""
    by_start: dict[str, list[RoadSegment]] = {}
    for s in segs:
        by_start.setdefault(s.start, []).append(s)
    terminals = sorted(n for n, out in by_start.items() if len(out) == 1)
    chain, prev, cur = [], None, terminals[direction % len(terminals)]
    while True:
        nxt = [s for s in by_start.get(cur, []) if s.end != prev]
        if not nxt:
            return chain
        chain.append(nxt[0].id)
        prev, cur = cur, nxt[0].end


def _simulate(trip: _Trip, pl: _Planner, t0: float, spec: SynthSpec, rng: np.random.Generator, traj_id: str,
              frame: _Frame, city: SynthCity) -> None:
    net, xy = pl.net, city.xy
    segs = [net.segment(s) for s in trip.route]
    n = len(segs)
    # distance-along-route bookkeeping with local straight geometry
    lens = [spec.block_m] * n
    lo = [trip.start_off if i == 0 else 0.0 for i in range(n)]
    hi = [trip.end_off if i == n - 1 else lens[i] for i in range(n)]
    if n == 1 and hi[0] <= lo[0]:
        hi[0] = min(lens[0], lo[0] + spec.block_m / 2)
    stops = {i: (off, dur) for i, off, dur in trip.stops}
    for i, (off, _) in stops.items():
        lo[i] = min(lo[i], max(off - spec.spacing_m, 0.0))
        hi[i] = max(hi[i], min(off + spec.spacing_m, lens[i]))

    def pos(i, off, lateral=0.0):
        (x0, y0), (x1, y1) = xy[segs[i].start], xy[segs[i].end]
        ux, uy = (x1 - x0) / lens[i], (y1 - y0) / lens[i]
        return x0 + ux * off + uy * lateral, y0 + uy * off - ux * lateral

    out: list[tuple[float, float, float, str]] = []  # t, x, y, segment
    crossings = []  # time the vehicle leaves segs[i] into segs[i+1]
    t = t0
    phase = 0.0  # distance travelled since the last moving fix
    for i in range(n):
        cuts = [lo[i]]
        if i in stops and lo[i] < stops[i][0] < hi[i]:
            cuts.append(stops[i][0])
        cuts.append(hi[i])
        for a, b in zip(cuts, cuts[1:]):
            d = a
            nxt = a + (spec.spacing_m - phase if out else 0.0)
            while nxt <= b:
                t += (nxt - d) / trip.speeds[i]
                out.append((t, *pos(i, nxt), segs[i].id))
                d = nxt
                nxt += spec.spacing_m
            t += (b - d) / trip.speeds[i]
            phase = (b - d) if out else 0.0
            if i in stops and b == stops[i][0]:
                off, dur = stops[i]
                px, py = pos(i, off, 3.0)
                stop_t = t
                k = 1
                while k * spec.park_fix_interval < dur:
                    out.append((stop_t + k * spec.park_fix_interval, px, py, segs[i].id))
                    k += 1
                t = stop_t + dur
                _record_parking(city, segs[i].id, off, (px, py), stop_t, traj_id, frame)
        if i < n - 1:
            crossings.append(t)

    for x in range(n - 1):
        a, b = segs[x], segs[x + 1]
        kind = pl.turn_type(a.id, b.id)
        if (a.id, kind) in pl.forbidden:
            node = city.net.intersection(a.end).location
            city.truth.append(TruthViolation("illegal_turn", a.end, node.lat, node.lng, crossings[x], traj_id))
    for x in range(len(crossings) - 2):
        s1, s2 = segs[x + 1], segs[x + 2]
        if s1.road_name != s2.road_name:
            continue
        dt = crossings[x + 2] - crossings[x]
        v = (s1.length + s2.length) / dt * 3.6
        if v > spec.speed_limit_kmh:
            mid = _road_midpoint(city, s1.road_name)
            city.truth.append(TruthViolation("speeding", s1.road_name, mid.lat, mid.lng,
                                             (crossings[x] + crossings[x + 2]) / 2, traj_id))

    for t_fix, x, y, seg in out:
        nx, ny = rng.normal(0.0, spec.noise_sigma, 2) if spec.noise_sigma > 0 else (0.0, 0.0)
        p = frame.geo(x + nx, y + ny)
        city.fixes.append((traj_id, round(t_fix, 3), p.lat, p.lng, seg))


def _record_parking(city: SynthCity, seg_id: str, off: float, pxy, t: float, traj_id: str, frame: _Frame) -> None:
    spec = city.spec
    for z in city.zone_sites:
        if seg_id not in (z.segment_id, z.twin_id):
            continue
        sign_xy = _sign_xy(city, z)
        if math.hypot(pxy[0] - sign_xy[0], pxy[1] - sign_xy[1]) < spec.zeta:
            loc = z.sign.location
            city.truth.append(TruthViolation("illegal_parking", z.segment_id, loc.lat, loc.lng, round(t, 3), traj_id))
            return


def _sign_xy(city: SynthCity, z: ZoneSite) -> tuple[float, float]:
    seg = city.net.segment(z.segment_id)
    (x0, y0), (x1, y1) = city.xy[seg.start], city.xy[seg.end]
    b = city.spec.block_m
    ux, uy = (x1 - x0) / b, (y1 - y0) / b
    return x0 + ux * z.sign_offset + uy * 6.0, y0 + uy * z.sign_offset - ux * 6.0


def _road_midpoint(city: SynthCity, road: str) -> GeoPoint:
    pts = [city.net.intersection(n).location for s in city.net.segments_of_road(road) for n in (s.start, s.end)]
    return GeoPoint(sum(p.lat for p in pts) / len(pts), sum(p.lng for p in pts) / len(pts))


def generate(spec: SynthSpec) -> SynthCity:
    """Build the city and simulate every trip. Deterministic in ``spec.seed``."""
    city = build_city(spec)
    rng = np.random.default_rng([spec.seed, 2])
    frame = _Frame(*spec.origin)
    pl = _Planner(city, rng)
    kinds = ["illegal_turn", "illegal_parking", "speeding", "lawful_parking"]
    cuts = np.cumsum([spec.illegal_turn_rate, spec.illegal_parking_rate, spec.speeding_rate,
                      spec.lawful_parking_rate])
    width = len(str(max(spec.n_trajectories - 1, 1)))
    for k in range(spec.n_trajectories):
        traj_id = f"v{k:0{width}d}"
        u = rng.random()
        idx = int(np.searchsorted(cuts, u, side="right"))
        kind = kinds[idx] if idx < len(kinds) else "lawful"
        if (kind == "illegal_turn" and not city.turn_sites) or (kind == "illegal_parking" and not city.zone_sites):
            kind = "lawful"
        trip = _plan_trip(kind, pl, spec, rng)
        if trip is None:
            kind = "lawful"
            trip = _plan_trip(kind, pl, spec, rng)
        hours = spec.kind_hours.get(kind, spec.lawful_hours) or spec.lawful_hours
        day = int(rng.integers(spec.days))
        hour = int(hours[rng.integers(len(hours))])
        t0 = spec.start_epoch + day * 86400.0 + hour * 3600.0 + float(rng.uniform(0, 2400.0))
        city.trip_kinds[traj_id] = kind
        _simulate(trip, pl, t0, spec, rng, traj_id, frame, city)
    city.truth.sort(key=lambda v: (v.t, v.traj_id, v.kind))
    return city


# ---------------------------------------------------------------------------
# output


SYNTH_FILES = {
    "network": "network.txt",
    "trajectories": "trajectories.csv",
    "signs": "signs.jsonl",
    "limits": "limits.csv",
    "truth": "truth.csv",
    "truth_fixes": "truth_fixes.csv",
    "truth_rules": "truth_rules.jsonl",
    "planted": "planted.json",
}


def write_city(city: SynthCity, out_dir: str | Path) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {k: out / v for k, v in SYNTH_FILES.items()}
    write_network(city.net, paths["network"])
    with open(paths["trajectories"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["traj_id", "timestamp", "lat", "lng"])
        for tid, t, lat, lng, _ in city.fixes:
            w.writerow([tid, repr(t), repr(lat), repr(lng)])
    with open(paths["truth_fixes"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["traj_id", "timestamp", "segment_id"])
        for tid, t, _, _, seg in city.fixes:
            w.writerow([tid, repr(t), seg])
    write_sign_inventory(city.signs, paths["signs"])
    write_speed_limits(city.limits, paths["limits"])
    write_truth(city.truth, paths["truth"])
    with open(paths["truth_rules"], "w", encoding="utf-8") as fh:
        for s in city.turn_sites:
            fh.write(json.dumps({"node": s.node, "approach": s.approach,
                                 "approach_bearing": _seg_bearing(city.xy, city.net.segment(s.approach)),
                                 "forbidden": _TURN_SIGN[s.forbidden].value,
                                 "lat": city.net.intersection(s.node).location.lat,
                                 "lng": city.net.intersection(s.node).location.lng}) + "\n")
    planted = {}
    for kind, ref in city.hotspots.items():
        if kind == "illegal_turn":
            loc = city.net.intersection(ref).location
        elif kind == "illegal_parking":
            loc = next(z.sign.location for z in city.zone_sites if z.segment_id == ref)
        else:
            loc = _road_midpoint(city, ref)
        planted[kind] = {"location_ref": ref, "lat": loc.lat, "lng": loc.lng}
    paths["planted"].write_text(json.dumps({"seed": city.spec.seed, "hotspots": planted}, indent=1) + "\n",
                                encoding="utf-8")
    return paths


def write_truth(truth, dest: str | Path) -> None:
    with open(dest, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kind", "location_ref", "lat", "lng", "timestamp", "traj_id"])
        for v in truth:
            w.writerow([v.kind, v.location_ref, repr(v.lat), repr(v.lng), repr(v.t), v.traj_id])


def read_truth(source: str | Path) -> list[TruthViolation]:
    with open(source, newline="", encoding="utf-8") as fh:
        return [TruthViolation(r["kind"], r["location_ref"], float(r["lat"]), float(r["lng"]),
                               float(r["timestamp"]), r["traj_id"]) for r in csv.DictReader(fh)]


def generate_synthetic(spec: SynthSpec, out_dir: str | Path) -> dict[str, Path]:
    """Generate a city and write network, trajectories, signs, limits and ground-truth files."""
    return write_city(generate(spec), out_dir)
