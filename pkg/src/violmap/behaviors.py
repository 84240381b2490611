"""Turning, parking and average-velocity extraction from matched trajectories."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .mapmatch import MatchedTrajectory
from .roadnet import GeoPoint, RoadNetwork, UNREACHABLE, bearing


class TurnType(str, Enum):
    LEFT = "left_turn"
    RIGHT = "right_turn"
    U_TURN = "u_turn"
    STRAIGHT = "straight"


@dataclass(frozen=True)
class TurningBehavior:
    type: TurnType
    traj_id: str
    location: GeoPoint
    t: float
    bb: float
    ba: float
    conf: float = 1.0


@dataclass(frozen=True)
class ParkingBehavior:
    traj_id: str
    location: GeoPoint
    st: float
    et: float


@dataclass(frozen=True)
class SpeedSample:
    traj_id: str
    road_name: str
    segment_ids: tuple[str, ...]
    v: float  # km/h
    t: float


@dataclass(frozen=True)
class ParkingParams:
    delta: float = 0.8  # m/s
    min_duration: float = 180.0  # s
    backward_tolerance: float = 25.0  # m, as in map matching

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.min_duration < 0:
            raise ValueError("min_duration must be non-negative")


@dataclass
class ExtractionStats:
    skipped_zero_dt: int = 0
    nonadjacent_transitions: int = 0
    unobserved_edge_transitions: int = 0


def classify_turn(bb: float, ba: float, straight_tol: float = 0.0) -> TurnType:
    """Classify the heading change ``(ba - bb) mod 360``.

    0 is straight, (0, 160) right, [160, 200] u-turn, (200, 360) left.
    ``straight_tol`` widens the straight band to changes within that many
    degrees of zero.
    """
    delta = (ba - bb) % 360.0
    if delta <= straight_tol or (straight_tol > 0 and delta >= 360.0 - straight_tol):
        return TurnType.STRAIGHT
    if delta < 160.0:
        return TurnType.RIGHT
    if delta <= 200.0:
        return TurnType.U_TURN
    return TurnType.LEFT


def _runs(m: MatchedTrajectory) -> list[tuple[str, int, int]]:
    """(segment_id, first index, last index) per maximal run of equal segments."""
    runs: list[tuple[str, int, int]] = []
    for k, (_, proj) in enumerate(m.matched):
        if runs and runs[-1][0] == proj.segment_id:
            runs[-1] = (runs[-1][0], runs[-1][1], k)
        else:
            runs.append((proj.segment_id, k, k))
    return runs


def _pass_time(m: MatchedTrajectory, net: RoadNetwork, run_a, run_b) -> float:
    """Interpolated time at which the vehicle crossed the node joining two runs."""
    fix_a, proj_a = m.matched[run_a[2]]
    fix_b, proj_b = m.matched[run_b[1]]
    head = max(net.segment(proj_a.segment_id).length - proj_a.offset, 0.0)
    tail = max(proj_b.offset, 0.0)
    total = head + tail
    frac = head / total if total > 0 else 0.5
    return fix_a.t + frac * (fix_b.t - fix_a.t)


def _end_bearing(points: Sequence[GeoPoint]) -> float:
    """Heading of travel arriving at the last polyline vertex."""
    return (bearing(points[-1], points[-2]) + 180.0) % 360.0


def _start_bearing(points: Sequence[GeoPoint]) -> float:
    return bearing(points[0], points[1])


def _edge_observed(m: MatchedTrajectory, net: RoadNetwork, run, incoming: bool, evidence: float) -> bool:
    """Whether some fix of a boundary run lies at least ``evidence`` metres from the crossed node."""
    seg = net.segment(run[0])
    projs = [p for _, p in m.matched[run[1]:run[2] + 1]]
    reach = seg.length - min(p.offset for p in projs) if incoming else max(p.offset for p in projs)
    return reach >= evidence


def transitions(m: MatchedTrajectory, net: RoadNetwork, stats: ExtractionStats | None = None,
                edge_evidence: float = 0.0):
    """Yield (incoming run, outgoing run, node id, pass time) for adjacent segment changes.

    A change out of the first run or into the last run is kept only when that
    run has a fix ``edge_evidence`` metres or more from the node; otherwise the
    direction the vehicle came from (or left by) was never observed.
    """
    runs = _runs(m)
    for k, (ra, rb) in enumerate(zip(runs, runs[1:])):
        sa, sb = net.segment(ra[0]), net.segment(rb[0])
        if sa.end != sb.start:
            if stats is not None:
                stats.nonadjacent_transitions += 1
            continue
        if edge_evidence > 0 and ((k == 0 and not _edge_observed(m, net, ra, True, edge_evidence)) or
                                  (k == len(runs) - 2 and not _edge_observed(m, net, rb, False, edge_evidence))):
            if stats is not None:
                stats.unobserved_edge_transitions += 1
            continue
        yield ra, rb, sa.end, _pass_time(m, net, ra, rb)


def extract_turnings(m: MatchedTrajectory, net: RoadNetwork, straight_tol: float = 5.0,
                     stats: ExtractionStats | None = None, edge_evidence: float = 10.0) -> list[TurningBehavior]:
    """Turning behaviors at every adjacent segment change of the matched route.

    The turn time is the interpolated pass time at the shared node rather than
    the time of a nearby fix.
    """
    out = []
    for ra, rb, node, t in transitions(m, net, stats, edge_evidence):
        sa, sb = net.segment(ra[0]), net.segment(rb[0])
        bb = _end_bearing(sa.geometry)
        ba = _start_bearing(sb.geometry)
        kind = classify_turn(bb, ba, straight_tol)
        if kind is TurnType.STRAIGHT:
            continue
        out.append(TurningBehavior(kind, m.traj_id, net.intersection(node).location, t, bb, ba, 1.0))
    return out


def _pair_ok(net: RoadNetwork, m: MatchedTrajectory, i: int, params: ParkingParams) -> bool:
    (f1, p1), (f2, p2) = m.matched[i], m.matched[i + 1]
    dt = abs(f2.t - f1.t)
    d = net.route_distance(p1, p2, backward_tol=params.backward_tolerance)
    if d == UNREACHABLE:
        return False
    if dt == 0:
        return d == 0
    return d / dt < params.delta


def parking_windows(ok: Sequence[bool]) -> list[tuple[int, int]]:
    """Adaptive sliding window over pair predicates ``ok[i]`` for points (i, i+1).

    Returns inclusive (first, last) point indices of each kept window.
    """
    windows = []
    n = len(ok) + 1
    start = 0
    while start < n - 1:
        end = start
        while end < n - 1 and ok[end]:
            end += 1
        if end == start:
            start += 1  # window (start, start+1) violates; slide to its end point
        else:
            windows.append((start, end))
            start = end
    return windows


def extract_parkings(m: MatchedTrajectory, params: ParkingParams, net: RoadNetwork) -> list[ParkingBehavior]:
    """Parking behaviors from consecutive-pair route speeds below ``delta``."""
    if len(m.matched) < 2:
        return []
    ok = [_pair_ok(net, m, i, params) for i in range(len(m.matched) - 1)]
    out = []
    for a, b in parking_windows(ok):
        window = m.matched[a:b + 1]
        st, et = window[0][0].t, window[-1][0].t
        if et - st < params.min_duration:
            continue
        lat = sum(p.point.lat for _, p in window) / len(window)
        lng = sum(p.point.lng for _, p in window) / len(window)
        out.append(ParkingBehavior(m.traj_id, GeoPoint(lat, lng), st, et))
    return out


def extract_velocities(m: MatchedTrajectory, net: RoadNetwork, stats: ExtractionStats | None = None,
                       edge_evidence: float = 10.0) -> list[SpeedSample]:
    """Average speed over every three consecutive crossed nodes on one road."""
    crossings = list(transitions(m, net, stats, edge_evidence))
    out = []
    for c0, c1, c2 in zip(crossings, crossings[1:], crossings[2:]):
        # c0 and c1 are consecutive only if c0's outgoing run is c1's incoming run
        if c0[1] != c1[0] or c1[1] != c2[0]:
            continue
        s1, s2 = net.segment(c1[0][0]), net.segment(c2[0][0])
        if not s1.road_name or s1.road_name != s2.road_name:
            continue
        dt = c2[3] - c0[3]
        if dt <= 0:
            if stats is not None:
                stats.skipped_zero_dt += 1
            continue
        dist = s1.length + s2.length
        out.append(SpeedSample(m.traj_id, s1.road_name, (s1.id, s2.id), dist / dt * 3.6,
                               (c0[3] + c2[3]) / 2))
    return out


# ---------------------------------------------------------------------------
# CSV I/O

TURN_HEADER = ["type", "traj_id", "lat", "lng", "t", "bb", "ba", "conf"]
PARK_HEADER = ["traj_id", "lat", "lng", "st", "et"]
SPEED_HEADER = ["traj_id", "road_name", "v_kmh", "t"]


def write_turnings(turns: Iterable[TurningBehavior], dest: str | Path) -> None:
    with open(dest, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TURN_HEADER)
        for tn in turns:
            w.writerow([tn.type.value, tn.traj_id, repr(tn.location.lat), repr(tn.location.lng),
                        repr(tn.t), repr(tn.bb), repr(tn.ba), repr(tn.conf)])


def read_turnings(source: str | Path) -> list[TurningBehavior]:
    with open(source, newline="", encoding="utf-8") as fh:
        return [TurningBehavior(TurnType(r["type"]), r["traj_id"],
                                GeoPoint(float(r["lat"]), float(r["lng"])), float(r["t"]),
                                float(r["bb"]), float(r["ba"]), float(r["conf"]))
                for r in csv.DictReader(fh)]


def write_parkings(parks: Iterable[ParkingBehavior], dest: str | Path) -> None:
    with open(dest, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PARK_HEADER)
        for pk in parks:
            w.writerow([pk.traj_id, repr(pk.location.lat), repr(pk.location.lng), repr(pk.st), repr(pk.et)])


def read_parkings(source: str | Path) -> list[ParkingBehavior]:
    with open(source, newline="", encoding="utf-8") as fh:
        return [ParkingBehavior(r["traj_id"], GeoPoint(float(r["lat"]), float(r["lng"])),
                                float(r["st"]), float(r["et"]))
                for r in csv.DictReader(fh)]


def write_speeds(samples: Iterable[SpeedSample], dest: str | Path) -> None:
    with open(dest, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SPEED_HEADER)
        for s in samples:
            w.writerow([s.traj_id, s.road_name, repr(s.v), repr(s.t)])


def read_speeds(source: str | Path) -> list[SpeedSample]:
    with open(source, newline="", encoding="utf-8") as fh:
        return [SpeedSample(r["traj_id"], r["road_name"], (), float(r["v_kmh"]), float(r["t"]))
                for r in csv.DictReader(fh)]
