"""Violation identification, hourly temporal profiles and prone-location inference."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .behaviors import ParkingBehavior, SpeedSample, TurningBehavior
from .restrictions import FORBIDS, NoParkingZone, NoTurnRule, SpeedLimit
from .roadnet import RoadNetwork, direct_distance

HOURS_PER_DAY = 24


class ViolationKind(str, Enum):
    ILLEGAL_TURN = "illegal_turn"
    ILLEGAL_PARKING = "illegal_parking"
    SPEEDING = "speeding"


class BucketingError(ValueError):
    pass


@dataclass(frozen=True)
class Violation:
    kind: ViolationKind
    location_ref: str
    t: float
    behavior_ref: str


@dataclass
class TemporalProfile:
    location_ref: str
    kind: ViolationKind
    counts: np.ndarray
    first_hour_of_day: int  # local hour-of-day of counts[0]

    @property
    def hours(self) -> int:
        return len(self.counts)


@dataclass
class TypicalDayProfile:
    location_ref: str
    kind: ViolationKind
    means: np.ndarray  # 24 values, index = local hour of day


@dataclass
class ThresholdSet:
    mu: np.ndarray
    sigma: np.ndarray
    th: np.ndarray
    n: int


@dataclass
class ProneLocation:
    location_ref: str
    kind: ViolationKind
    hours: list[tuple[int, float, float]] = field(default_factory=list)


@dataclass
class DetectionStats:
    uncovered_speed_samples: int = 0
    unzoned_parkings: int = 0


# ---------------------------------------------------------------------------
# identification


def detect_illegal_turns(turns: Sequence[TurningBehavior], bunch_of: Sequence[str],
                         rules: Sequence[NoTurnRule], intersection_of: Mapping[str, str] | None = None,
                         refs: Sequence[str] | None = None) -> list[Violation]:
    """Turns whose bunch carries a rule forbidding the turn's type.

    ``bunch_of[k]`` is the bunch id of ``turns[k]``. Violations are located at
    the bunch's intersection (``intersection_of``), falling back to the bunch id.
    """
    forbidden: dict[str, set] = {}
    for rule in rules:
        forbidden.setdefault(rule.bunch_id, set()).add(FORBIDS[rule.forbidden])
    out = []
    for k, (tn, bid) in enumerate(zip(turns, bunch_of)):
        if bid is not None and tn.type in forbidden.get(bid, ()):
            loc = intersection_of.get(bid, bid) if intersection_of else bid
            out.append(Violation(ViolationKind.ILLEGAL_TURN, loc, tn.t, refs[k] if refs else f"turn:{k}"))
    return out


def detect_illegal_parking(parkings: Sequence[ParkingBehavior], zones: Sequence[NoParkingZone], zeta: float,
                           net: RoadNetwork, stats: DetectionStats | None = None,
                           match_radius: float = 200.0) -> list[Violation]:
    """Parkings on a zoned segment closer than ``zeta`` to one of its signs."""
    by_segment: dict[str, list[NoParkingZone]] = {}
    for z in zones:
        by_segment.setdefault(z.segment_id, []).append(z)
    out = []
    for k, pk in enumerate(parkings):
        proj = net.nearest_segment(pk.location, match_radius)
        seg_zones = by_segment.get(proj.segment_id, []) if proj else []
        if not seg_zones:
            if stats is not None:
                stats.unzoned_parkings += 1
            continue
        if any(direct_distance(z.sign.location, pk.location) < zeta for z in seg_zones):
            out.append(Violation(ViolationKind.ILLEGAL_PARKING, proj.segment_id, pk.st, f"parking:{k}"))
    return out


def detect_speeding(samples: Sequence[SpeedSample], limits: Iterable[SpeedLimit],
                    stats: DetectionStats | None = None) -> list[Violation]:
    """Speed samples strictly above their road's limit."""
    table = {lim.road_name: lim.limit for lim in limits}
    out = []
    for k, s in enumerate(samples):
        limit = table.get(s.road_name)
        if limit is None:
            if stats is not None:
                stats.uncovered_speed_samples += 1
            continue
        if s.v > limit:
            out.append(Violation(ViolationKind.SPEEDING, s.road_name, s.t, f"speed:{k}"))
    return out


# ---------------------------------------------------------------------------
# profiles and thresholds


def hour_grid(start: float, end: float, tz_offset_hours: float = 0.0) -> tuple[float, int, int]:
    """(local epoch of the first bucket, number of hourly buckets, hour-of-day of the first bucket)."""
    if end < start:
        raise BucketingError("span end precedes start")
    off = tz_offset_hours * 3600.0
    base = math.floor((start + off) / 3600.0) * 3600.0
    n = int(math.floor((end + off - base) / 3600.0)) + 1
    first = int(base // 3600) % HOURS_PER_DAY
    return base, n, first


def build_profiles(violations: Sequence[Violation], span: tuple[float, float], tz_offset_hours: float = 0.0,
                   candidates: Iterable[tuple[str, ViolationKind]] = ()) -> list[TemporalProfile]:
    """Hourly violation counts per location over the span.

    ``candidates`` adds zero profiles for restricted locations that saw no
    violation. Output is ordered by (kind, location_ref).
    """
    base, n, first = hour_grid(span[0], span[1], tz_offset_hours)
    off = tz_offset_hours * 3600.0
    counts: dict[tuple[ViolationKind, str], np.ndarray] = {}
    for kind_ref in candidates:
        ref, kind = kind_ref
        counts.setdefault((ViolationKind(kind), ref), np.zeros(n, dtype=np.int64))
    for v in violations:
        if not span[0] <= v.t <= span[1]:
            raise BucketingError(f"violation at t={v.t} lies outside span {span}")
        idx = int((v.t + off - base) // 3600.0)
        counts.setdefault((v.kind, v.location_ref), np.zeros(n, dtype=np.int64))[idx] += 1
    return [TemporalProfile(ref, kind, c, first) for (kind, ref), c in sorted(counts.items())]


def typical_day(profile: TemporalProfile) -> TypicalDayProfile:
    """Mean count per hour of day, over the observed instances of that hour."""
    hod = (profile.first_hour_of_day + np.arange(profile.hours)) % HOURS_PER_DAY
    sums = np.bincount(hod, weights=profile.counts, minlength=HOURS_PER_DAY)
    seen = np.bincount(hod, minlength=HOURS_PER_DAY)
    means = np.divide(sums, seen, out=np.zeros(HOURS_PER_DAY), where=seen > 0)
    return TypicalDayProfile(profile.location_ref, profile.kind, means)


def compute_thresholds(typicals: Sequence[TypicalDayProfile]) -> ThresholdSet:
    """Per-hour mean + 2 * population std over all candidates."""
    if not typicals:
        raise ValueError("need at least one candidate profile")
    m = np.vstack([tp.means for tp in typicals])
    mu = m.mean(axis=0)
    sigma = np.sqrt(((m - mu) ** 2).mean(axis=0))
    return ThresholdSet(mu, sigma, mu + 2.0 * sigma, len(typicals))


def infer_prone_locations(typicals: Sequence[TypicalDayProfile], thresholds: ThresholdSet) -> list[ProneLocation]:
    """Candidates whose typical count strictly exceeds the hour's threshold."""
    out = []
    for tp in typicals:
        hours = [(j, float(tp.means[j]), float(thresholds.th[j]))
                 for j in range(HOURS_PER_DAY) if tp.means[j] > thresholds.th[j]]
        if hours:
            out.append(ProneLocation(tp.location_ref, tp.kind, hours))
    return out


# ---------------------------------------------------------------------------
# I/O


def write_violations(violations: Iterable[Violation], dest: str | Path) -> None:
    with open(dest, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kind", "location_ref", "timestamp", "behavior_ref"])
        for v in violations:
            w.writerow([v.kind.value, v.location_ref, repr(v.t), v.behavior_ref])


def read_violations(source: str | Path) -> list[Violation]:
    with open(source, newline="", encoding="utf-8") as fh:
        return [Violation(ViolationKind(r["kind"]), r["location_ref"], float(r["timestamp"]), r["behavior_ref"])
                for r in csv.DictReader(fh)]


def write_matrix(rows: Sequence[tuple[str, str, Sequence[float]]], header: Sequence[str], dest: str | Path) -> None:
    """CSV with columns ``kind,location_ref,<header...>``."""
    with open(dest, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kind", "location_ref", *header])
        for kind, ref, values in rows:
            w.writerow([kind, ref, *(repr(float(x)) for x in values)])


def write_profiles(profiles: Sequence[TemporalProfile], dest: str | Path) -> None:
    if not profiles:
        write_matrix([], [], dest)
        return
    first = profiles[0].first_hour_of_day
    header = [f"h{k}@{(first + k) % HOURS_PER_DAY:02d}" for k in range(profiles[0].hours)]
    write_matrix([(p.kind.value, p.location_ref, p.counts) for p in profiles], header, dest)


def write_typicals(typicals: Sequence[TypicalDayProfile], dest: str | Path) -> None:
    write_matrix([(t.kind.value, t.location_ref, t.means) for t in typicals],
                 [f"{j:02d}" for j in range(HOURS_PER_DAY)], dest)


def read_typicals(source: str | Path) -> list[TypicalDayProfile]:
    with open(source, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return [TypicalDayProfile(r[1], ViolationKind(r[0]), np.array([float(x) for x in r[2:]])) for r in rows[1:]]


def write_thresholds(ts: ThresholdSet, dest: str | Path) -> None:
    write_matrix([("", "mu", ts.mu), ("", "sigma", ts.sigma), ("", "th", ts.th)],
                 [f"{j:02d}" for j in range(HOURS_PER_DAY)], dest)


def read_thresholds(source: str | Path, n: int = 0) -> ThresholdSet:
    with open(source, newline="", encoding="utf-8") as fh:
        rows = {r[1]: np.array([float(x) for x in r[2:]]) for r in list(csv.reader(fh))[1:]}
    return ThresholdSet(rows["mu"], rows["sigma"], rows["th"], n)
