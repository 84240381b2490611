"""HMM map matching of GPS point trajectories onto directed road segments.

Emission: zero-mean Gaussian in the fix-to-segment distance, cut to zero
beyond ``emission_cutoff``. Transition: exponential in the gap between
route distance and direct distance of consecutive fixes, cut to zero beyond
``transition_cutoff`` or when the route implies more than ``speed_cutoff``.
Decoding is log-domain Viterbi; a fix with no candidates, or with no
reachable candidate, ends the current piece and matching restarts.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from statistics import median
from typing import Iterable, Sequence

import numpy as np

from .roadnet import GeoPoint, Projection, RoadNetwork, direct_distance

MAD_SCALE = 1.4826
LN2 = math.log(2.0)
_SQRT_2PI = math.sqrt(2.0 * math.pi)


class EmptyTrajectoryError(ValueError):
    pass


class ParameterEstimationError(ValueError):
    pass


@dataclass(frozen=True)
class GpsFix:
    traj_id: str
    t: float
    location: GeoPoint


@dataclass(frozen=True)
class PointTrajectory:
    traj_id: str
    fixes: tuple[GpsFix, ...]

    def __post_init__(self):
        for a, b in zip(self.fixes, self.fixes[1:]):
            if b.t < a.t:
                raise ValueError(f"trajectory {self.traj_id}: timestamps out of order")
        if any(f.traj_id != self.traj_id for f in self.fixes):
            raise ValueError(f"trajectory {self.traj_id}: mixed traj_id in fixes")

    def __len__(self):
        return len(self.fixes)


@dataclass(frozen=True)
class HmmParams:
    sigma_z: float = 5.0
    beta: float = 5.0
    emission_cutoff: float = 200.0
    transition_cutoff: float = 2000.0
    speed_cutoff: float = 180.0  # km/h
    backward_tolerance: float = 25.0  # same-segment backward jitter, meters

    def __post_init__(self):
        for name in ("sigma_z", "beta", "emission_cutoff", "transition_cutoff", "speed_cutoff"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.backward_tolerance < 0:
            raise ValueError("backward_tolerance must be non-negative")


@dataclass
class MatchedTrajectory:
    traj_id: str
    matched: list[tuple[GpsFix, Projection]] = field(default_factory=list)

    @property
    def segment_route(self) -> list[str]:
        return to_segment_route(self)

    @property
    def fixes(self) -> list[GpsFix]:
        return [f for f, _ in self.matched]


# ---------------------------------------------------------------------------
# preprocessing and parameter estimation


def _speed_kmh(dist_m: float, dt: float) -> float:
    if dt <= 0:
        return math.inf if dist_m > 0 else 0.0
    return dist_m / dt * 3.6


def preprocess(traj: PointTrajectory, sigma_z: float, speed_cutoff: float = 180.0) -> PointTrajectory:
    """Drop duplicate, abnormal and too-close fixes in one greedy pass.

    Each fix is compared with the last kept fix: same timestamp -> duplicate,
    implied direct speed above ``speed_cutoff`` -> abnormal, closer than
    ``2 * sigma_z`` -> thinned.
    """
    if not traj.fixes:
        raise EmptyTrajectoryError(f"trajectory {traj.traj_id} is empty")
    kept = [traj.fixes[0]]
    for fix in traj.fixes[1:]:
        last = kept[-1]
        if fix.t == last.t:
            continue
        d = direct_distance(last.location, fix.location)
        if _speed_kmh(d, fix.t - last.t) > speed_cutoff:
            continue
        if d < 2.0 * sigma_z:
            continue
        kept.append(fix)
    return PointTrajectory(traj.traj_id, tuple(kept))


def estimate_sigma(residuals: Sequence[float], floor: float = 1.0) -> float:
    """Robust GPS noise scale: 1.4826 * median(residuals), floored."""
    if len(residuals) == 0:
        raise ParameterEstimationError("no residuals to estimate sigma_z from")
    return max(MAD_SCALE * median(residuals), floor)


def estimate_beta(gaps: Sequence[float], floor: float = 1.0) -> float:
    """Transition scale: median(|direct - route|) / ln 2, floored."""
    if len(gaps) == 0:
        raise ParameterEstimationError("no route/direct gaps to estimate beta from")
    return max(median(gaps) / LN2, floor)


def _tied_nearest(net: RoadNetwork, p: GeoPoint, radius: float) -> list[Projection]:
    cands = net.nearest_segments(p, radius)
    if not cands:
        return []
    d0 = cands[0].distance
    return [c for c in cands if c.distance <= d0 + 1e-6]


def estimate_params(trajs: Iterable[PointTrajectory], net: RoadNetwork,
                    base: HmmParams | None = None, sigma_floor: float = 1.0,
                    beta_floor: float = 1.0) -> HmmParams:
    """One-pass estimate of sigma_z and beta from nearest-segment provisional matches.

    Directed twins of a two-way road are equidistant from every fix, so the
    route gap for a pair of fixes is the smallest over the tied nearest
    projections of each fix.
    """
    base = base or HmmParams()
    residuals: list[float] = []
    gaps: list[float] = []
    for traj in trajs:
        prev_fix, prev_cands = None, []
        for fix in traj.fixes:
            cands = _tied_nearest(net, fix.location, base.emission_cutoff)
            if cands:
                residuals.append(cands[0].distance)
            if prev_fix is not None and cands and prev_cands:
                direct = direct_distance(prev_fix.location, fix.location)
                route = net.route_matrix(prev_cands, cands, bound=direct + base.transition_cutoff,
                                         backward_tol=base.backward_tolerance)
                best = float(np.min(route))
                if math.isfinite(best):
                    gaps.append(abs(direct - best))
            prev_fix, prev_cands = fix, cands
    sigma = estimate_sigma(residuals, sigma_floor)
    beta = estimate_beta(gaps, beta_floor) if gaps else beta_floor
    return replace(base, sigma_z=sigma, beta=beta)


# ---------------------------------------------------------------------------
# probabilities


def emission_prob(d: float, params: HmmParams) -> float:
    if d > params.emission_cutoff:
        return 0.0
    s = params.sigma_z
    return math.exp(-0.5 * (d / s) ** 2) / (_SQRT_2PI * s)


def transition_prob(d_t: float, params: HmmParams, implied_speed: float = 0.0) -> float:
    if not math.isfinite(d_t) or d_t > params.transition_cutoff or implied_speed > params.speed_cutoff:
        return 0.0
    return math.exp(-d_t / params.beta) / params.beta


def log_emission(d: np.ndarray, params: HmmParams) -> np.ndarray:
    s = params.sigma_z
    out = -0.5 * (d / s) ** 2 - math.log(_SQRT_2PI * s)
    return np.where(d > params.emission_cutoff, -np.inf, out)


def log_transition(route: np.ndarray, direct: float, dt: float, params: HmmParams) -> np.ndarray:
    """Log transition matrix from a route-distance matrix (inf = unreachable)."""
    d_t = np.abs(route - direct)
    out = -d_t / params.beta - math.log(params.beta)
    speed = route / dt * 3.6 if dt > 0 else np.where(route > 0, np.inf, 0.0)
    dead = ~np.isfinite(route) | (d_t > params.transition_cutoff) | (speed > params.speed_cutoff)
    return np.where(dead, -np.inf, out)


# ---------------------------------------------------------------------------
# decoding


def viterbi(log_init: np.ndarray, steps: Sequence[tuple[np.ndarray, np.ndarray]],
            tie_rtol: float = 1e-12) -> tuple[list[int], float]:
    """Log-domain Viterbi over a chain of candidate sets.

    ``steps`` holds (log_transition[i, j], log_emission[j]) per later observation.
    Ties go to the smallest candidate ordinal. Scores within ``tie_rtol``
    (relative) of the best count as tied: sequences that tie exactly in real
    arithmetic, such as two routes of equal total length, can come out a few
    ulps apart, and rounding should not pick the winner.
    """
    def first_near_max(values: np.ndarray, axis: int = 0) -> np.ndarray:
        mx = np.max(values, axis=axis)
        with np.errstate(invalid="ignore"):
            floor = mx - tie_rtol * np.maximum(1.0, np.abs(mx))
        return np.argmax(values >= np.where(np.isfinite(mx), floor, mx), axis=axis)

    score = np.asarray(log_init, dtype=float)
    back = []
    for trans, emis in steps:
        total = score[:, None] + trans
        arg = first_near_max(total)
        score = total[arg, np.arange(total.shape[1])] + emis
        back.append(arg)
    last = int(first_near_max(score))
    best = float(score[last])
    path = [last]
    for arg in reversed(back):
        path.append(int(arg[path[-1]]))
    path.reverse()
    return path, best


def match(traj: PointTrajectory, net: RoadNetwork, params: HmmParams) -> list[MatchedTrajectory]:
    """Map-match a (preprocessed) trajectory; returns one piece per HMM break."""
    if not traj.fixes:
        raise EmptyTrajectoryError(f"trajectory {traj.traj_id} is empty")
    max_speed = params.speed_cutoff / 3.6
    pieces: list[list[tuple[GpsFix, list[Projection]]]] = []
    chain_fixes: list[tuple[GpsFix, list[Projection]]] = []
    chain_steps: list[tuple[np.ndarray, np.ndarray]] = []
    chain_init: np.ndarray | None = None
    decoded: list[tuple[list[tuple[GpsFix, list[Projection]]], list[int]]] = []

    def close():
        nonlocal chain_fixes, chain_steps, chain_init
        if chain_fixes:
            path, _ = viterbi(chain_init, chain_steps)
            decoded.append((chain_fixes, path))
        chain_fixes, chain_steps, chain_init = [], [], None

    score = None
    for fix in traj.fixes:
        cands = net.nearest_segments(fix.location, params.emission_cutoff)
        if not cands:
            close()
            score = None
            continue
        emis = log_emission(np.array([c.distance for c in cands]), params)
        if not chain_fixes:
            chain_init = emis
            chain_fixes = [(fix, cands)]
            score = emis
            continue
        prev_fix, prev_cands = chain_fixes[-1]
        direct = direct_distance(prev_fix.location, fix.location)
        dt = fix.t - prev_fix.t
        bound = min(direct + params.transition_cutoff, max_speed * dt) if dt > 0 else direct + params.transition_cutoff
        route = net.route_matrix(prev_cands, cands, bound=bound, backward_tol=params.backward_tolerance)
        trans = log_transition(route, direct, dt, params)
        nxt = np.max(score[:, None] + trans, axis=0) + emis
        if not np.any(np.isfinite(nxt)):
            close()
            chain_init = emis
            chain_fixes = [(fix, cands)]
            score = emis
            continue
        chain_fixes.append((fix, cands))
        chain_steps.append((trans, emis))
        score = nxt
    close()

    out = []
    for fixes, path in decoded:
        out.append(MatchedTrajectory(traj.traj_id, [(f, c[k]) for (f, c), k in zip(fixes, path)]))
    if len(out) > 1:
        for k, m in enumerate(out):
            m.traj_id = f"{traj.traj_id}#{k}"
    return out


def to_segment_route(m: MatchedTrajectory) -> list[str]:
    """Segment ids of the matched projections with consecutive repeats collapsed."""
    route: list[str] = []
    for _, proj in m.matched:
        if not route or route[-1] != proj.segment_id:
            route.append(proj.segment_id)
    return route


# ---------------------------------------------------------------------------
# I/O


def _parse_time(token: str) -> float:
    token = token.strip()
    try:
        return float(int(token))
    except ValueError:
        pass
    try:
        return float(token)
    except ValueError:
        pass
    ts = datetime.fromisoformat(token.replace("Z", "+00:00"))
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.timestamp()


def read_trajectories(source: str | Path) -> list[PointTrajectory]:
    """Read ``traj_id,timestamp,lat,lng`` CSV; fixes are stably sorted by time.

    Duplicates are kept here and left for ``preprocess`` to drop.
    """
    groups: dict[str, list[GpsFix]] = {}
    with open(source, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for lineno, row in enumerate(reader, 2):
            try:
                fix = GpsFix(row["traj_id"], _parse_time(row["timestamp"]),
                             GeoPoint(float(row["lat"]), float(row["lng"])))
            except (KeyError, ValueError, TypeError) as exc:
                raise ValueError(f"{source}: line {lineno}: {exc}") from exc
            groups.setdefault(fix.traj_id, []).append(fix)
    out = []
    for tid in sorted(groups):
        out.append(PointTrajectory(tid, tuple(sorted(groups[tid], key=lambda f: f.t))))
    return out


MATCHED_HEADER = ["traj_id", "timestamp", "lat", "lng", "segment_id", "offset_m", "match_lat", "match_lng"]


def write_matched(matched: Iterable[MatchedTrajectory], dest: str | Path) -> None:
    with open(dest, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MATCHED_HEADER)
        for m in matched:
            for fix, p in m.matched:
                w.writerow([m.traj_id, repr(fix.t), repr(fix.location.lat), repr(fix.location.lng),
                            p.segment_id, repr(p.offset), repr(p.point.lat), repr(p.point.lng)])


def read_matched(source: str | Path, net: RoadNetwork) -> list[MatchedTrajectory]:
    """Re-read matched output; projection distance is recomputed from the two points."""
    out: dict[str, MatchedTrajectory] = {}
    with open(source, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            tid = row["traj_id"]
            loc = GeoPoint(float(row["lat"]), float(row["lng"]))
            pt = GeoPoint(float(row["match_lat"]), float(row["match_lng"]))
            fix = GpsFix(tid, float(row["timestamp"]), loc)
            proj = Projection(row["segment_id"], pt, float(row["offset_m"]), direct_distance(loc, pt))
            out.setdefault(tid, MatchedTrajectory(tid)).matched.append((fix, proj))
    return list(out.values())
