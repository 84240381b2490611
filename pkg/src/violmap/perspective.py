"""Driver-perspective modeling ahead of turning locations.

Turns are clustered into intersections, grouped by approach bearing into
bunches, and the fixes each vehicle reported just before its turn are fitted
with a cubic ``y = h(x)`` in a local frame whose x-axis points along the
approach. View poses are sampled on that curve with tangent headings.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .behaviors import TurningBehavior
from .mapmatch import GpsFix
from .roadnet import EARTH_RADIUS, GeoPoint, Intersection, RoadNetwork, direct_distance

FIELD_OF_VIEW = 74


class InsufficientDataError(ValueError):
    pass


class DegenerateFitError(ValueError):
    pass


@dataclass(frozen=True)
class LocalFrame:
    """Tangent-plane frame: origin at ``origin``, x along ``rotation`` (compass degrees), y to its left."""

    origin: GeoPoint
    rotation: float

    def to_local(self, lat, lng):
        lat = np.asarray(lat, dtype=float)
        lng = np.asarray(lng, dtype=float)
        k = EARTH_RADIUS * math.pi / 180.0
        east = (lng - self.origin.lng) * k * math.cos(math.radians(self.origin.lat))
        north = (lat - self.origin.lat) * k
        b = math.radians(self.rotation)
        x = east * math.sin(b) + north * math.cos(b)
        y = -east * math.cos(b) + north * math.sin(b)
        return x, y

    def to_world(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        b = math.radians(self.rotation)
        east = x * math.sin(b) - y * math.cos(b)
        north = x * math.cos(b) + y * math.sin(b)
        k = EARTH_RADIUS * math.pi / 180.0
        lat = self.origin.lat + north / k
        lng = self.origin.lng + east / (k * math.cos(math.radians(self.origin.lat)))
        return lat, lng


@dataclass
class Bunch:
    id: str
    intersection_id: str
    location: GeoPoint
    bb: float
    members: list[TurningBehavior] = field(default_factory=list)


@dataclass
class ApproachPointSet:
    bunch_id: str
    frame: LocalFrame
    x: np.ndarray
    y: np.ndarray


@dataclass(frozen=True)
class CubicCurve:
    theta: tuple[float, float, float, float]
    domain: tuple[float, float]
    frame: LocalFrame
    degenerate: bool = False

    def __call__(self, x):
        t0, t1, t2, t3 = self.theta
        x = np.asarray(x, dtype=float)
        return t0 + x * (t1 + x * (t2 + x * t3))

    def slope(self, x):
        _, t1, t2, t3 = self.theta
        x = np.asarray(x, dtype=float)
        return t1 + x * (2 * t2 + 3 * t3 * x)


@dataclass(frozen=True)
class ViewPose:
    location: GeoPoint
    heading: float
    fov: float = FIELD_OF_VIEW
    segment_id: str | None = None


# ---------------------------------------------------------------------------
# intersections and bunches


def detect_intersections(turns: Sequence[TurningBehavior], cluster_radius: float = 25.0) -> list[Intersection]:
    """Greedy centroid clustering of turn locations.

    Each turn joins the first cluster whose running centroid is within
    ``cluster_radius``; otherwise it starts a new one. Clusters are numbered
    by centroid (lat, lng) so ids do not depend on input order of equal sets.
    """
    sums: list[list[float]] = []  # lat_sum, lng_sum, count
    for tn in turns:
        for c in sums:
            centroid = GeoPoint(c[0] / c[2], c[1] / c[2])
            if direct_distance(centroid, tn.location) <= cluster_radius:
                c[0] += tn.location.lat
                c[1] += tn.location.lng
                c[2] += 1
                break
        else:
            sums.append([tn.location.lat, tn.location.lng, 1])
    centroids = sorted((GeoPoint(c[0] / c[2], c[1] / c[2]) for c in sums), key=lambda p: (round(p.lat, 6), round(p.lng, 6)))
    return [Intersection(f"X{k:04d}", p) for k, p in enumerate(centroids)] if centroids else []


def assign_intersections(turns: Sequence[TurningBehavior],
                         intersections: Sequence[Intersection]) -> list[str]:
    """Nearest intersection id for each turn."""
    out = []
    for tn in turns:
        best = min(intersections, key=lambda it: (direct_distance(it.location, tn.location), it.id))
        out.append(best.id)
    return out


def bearing_bin(bb: float, width: float = 45.0) -> int:
    """Index of the bin centred on ``k * width``; a value on a bin edge goes to the lower bin."""
    n = round(360.0 / width)
    return int(math.ceil((bb % 360.0 - width / 2.0) / width)) % n


def circular_mean(degrees: Iterable[float]) -> float:
    rad = np.radians(np.asarray(list(degrees), dtype=float))
    mean = math.degrees(math.atan2(np.sin(rad).sum(), np.cos(rad).sum())) % 360.0
    return 0.0 if mean == 360.0 else mean


def group_bunches(turns: Sequence[TurningBehavior], intersection: Intersection,
                  width: float = 45.0) -> list[Bunch]:
    """Partition the turns at one intersection by binned approach bearing."""
    bins: dict[int, list[TurningBehavior]] = {}
    for tn in turns:
        bins.setdefault(bearing_bin(tn.bb, width), []).append(tn)
    out = []
    for k in sorted(bins):
        members = bins[k]
        center = int(round(k * width)) % 360
        out.append(Bunch(f"{intersection.id}@{center:03d}", intersection.id, intersection.location,
                         circular_mean(tn.bb for tn in members), members))
    return out


# ---------------------------------------------------------------------------
# approach points and cubic fit


def select_approach_points(bunch: Bunch, trajectories: Mapping[str, Sequence[GpsFix]],
                           turns_by_traj: Mapping[str, Sequence[TurningBehavior]],
                           theta: float = 60.0, min_points: int = 4) -> ApproachPointSet:
    """Collect each member's fixes reported within ``theta`` seconds before its turn.

    Fixes earlier than the same trajectory's previous turn are dropped.
    """
    frame = LocalFrame(bunch.location, bunch.bb)
    lats, lngs = [], []
    for tn in bunch.members:
        prev_t = -math.inf
        for other in turns_by_traj.get(tn.traj_id, ()):
            if other.t < tn.t:
                prev_t = max(prev_t, other.t)
        for fix in trajectories.get(tn.traj_id, ()):
            if fix.t <= tn.t and tn.t - fix.t < theta and fix.t >= prev_t:
                lats.append(fix.location.lat)
                lngs.append(fix.location.lng)
    if len(lats) < min_points:
        raise InsufficientDataError(f"bunch {bunch.id}: {len(lats)} approach points, need {min_points}")
    x, y = frame.to_local(lats, lngs)
    return ApproachPointSet(bunch.id, frame, x, y)


def cubic_cost(theta: Sequence[float], x: np.ndarray, y: np.ndarray) -> float:
    """Least-squares cost (1 / 2m) * sum (h(x) - y)^2."""
    t0, t1, t2, t3 = theta
    r = t0 + x * (t1 + x * (t2 + x * t3)) - y
    return float(r @ r) / (2 * len(x))


def fit_cubic(points: ApproachPointSet, fallback: bool = False) -> CubicCurve:
    """Least-squares cubic through the approach points.

    Solved by SVD-based least squares on a column-scaled Vandermonde matrix.
    With fewer than 4 distinct x the fit raises, unless ``fallback`` is set
    and at least 2 distinct x exist, in which case a line is fitted and the
    curve is flagged degenerate.
    """
    x, y = np.asarray(points.x, dtype=float), np.asarray(points.y, dtype=float)
    distinct = len(np.unique(x))
    degree = 3
    if distinct < 4:
        if not fallback or distinct < 2:
            raise DegenerateFitError(f"{distinct} distinct x values; a cubic needs 4")
        degree = 1
    scale = max(float(np.max(np.abs(x))), 1.0)
    u = x / scale
    design = np.vander(u, degree + 1, increasing=True)
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    coef = coef / scale ** np.arange(degree + 1)
    theta = tuple(float(c) for c in coef) + (0.0,) * (3 - degree)
    return CubicCurve(theta, (float(x.min()), float(x.max())), points.frame, degree < 3)


def sample_view_poses(curve: CubicCurve, count: int = 5, net: RoadNetwork | None = None,
                      snap_radius: float = 200.0) -> list[ViewPose]:
    """Poses at uniform x over the curve domain, heading along the tangent.

    A single pose sits at the domain midpoint. With a network, each pose also
    records the segment its location matches to.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    lo, hi = curve.domain
    xs = np.array([(lo + hi) / 2.0]) if count == 1 else np.linspace(lo, hi, count)
    ys = curve(xs)
    lat, lng = curve.frame.to_world(xs, ys)
    slopes = curve.slope(xs)
    out = []
    for k in range(len(xs)):
        heading = (curve.frame.rotation - math.degrees(math.atan(slopes[k]))) % 360.0
        loc = GeoPoint(float(lat[k]), float(lng[k]))
        seg = None
        if net is not None:
            near = net.nearest_segments(loc, snap_radius)
            seg = near[0].segment_id if near else None
        out.append(ViewPose(loc, 0.0 if heading == 360.0 else heading, FIELD_OF_VIEW, seg))
    return out


# ---------------------------------------------------------------------------
# manifest I/O


def write_manifest(poses_by_bunch: Mapping[str, Sequence[ViewPose]], dest: str | Path) -> None:
    """JSON Lines, one pose per line, in bunch-id order."""
    with open(dest, "w", encoding="utf-8") as fh:
        for bid in sorted(poses_by_bunch):
            for k, pose in enumerate(poses_by_bunch[bid]):
                fh.write(json.dumps({"bunch_id": bid, "lat": pose.location.lat, "lng": pose.location.lng,
                                     "heading": pose.heading, "fov": pose.fov, "seq": k}) + "\n")


def read_manifest(source: str | Path) -> dict[str, list[ViewPose]]:
    out: dict[str, list[ViewPose]] = {}
    with open(source, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            out.setdefault(rec["bunch_id"], []).append(
                ViewPose(GeoPoint(rec["lat"], rec["lng"]), rec["heading"], rec.get("fov", FIELD_OF_VIEW)))
    return out
