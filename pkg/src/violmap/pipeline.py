"""End-to-end orchestration: configuration, restartable stages, GeoJSON export.

Each stage reads the previous stages' persisted artifacts from the output
directory and writes its own, so any stage can be rerun on its own.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Sequence

from . import behaviors as bh
from . import perspective as ps
from . import restrictions as rs
from . import violations as vi
from .mapmatch import (HmmParams, MatchedTrajectory, PointTrajectory, estimate_params, match, preprocess,
                       read_matched, read_trajectories, write_matched)
from .roadnet import GeoPoint, Intersection, NetworkLoadError, NetworkStructureError, RoadNetwork, load_network

log = logging.getLogger(__name__)

STAGES = ("match", "behaviors", "perspective", "restrict", "violations", "infer", "export")

ARTIFACTS = {
    "matched": "matched.csv",
    "params": "hmm_params.json",
    "turnings": "turnings.csv",
    "parkings": "parkings.csv",
    "speeds": "speeds.csv",
    "intersections": "intersections.csv",
    "bunches": "bunches.jsonl",
    "manifest": "manifest.jsonl",
    "signs_used": "signs_used.jsonl",
    "rules": "rules.jsonl",
    "zones": "zones.jsonl",
    "violations": "violations.csv",
    "span": "span.json",
    "profiles": "profiles.csv",
    "typical": "typical.csv",
    "thresholds": "thresholds.csv",
    "prone": "prone.csv",
    "geojson": "prone.geojson",
    "report": "report.json",
}


class ConfigError(ValueError):
    pass


class InputError(OSError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage: str, record: str, cause: BaseException | str):
        super().__init__(f"stage {stage!r} failed on {record}: {cause}")
        self.stage, self.record, self.cause = stage, record, cause


# ---------------------------------------------------------------------------
# configuration


@dataclass
class PipelineConfig:
    network: str = "network.txt"
    trajectories: str = "trajectories.csv"
    signs: str = ""
    limits: str = ""
    out_dir: str = "out"
    # map matching
    sigma_z: float = 0.0  # 0 = estimate from the data
    beta: float = 0.0  # 0 = estimate from the data
    sigma_floor: float = 1.0
    beta_floor: float = 1.0
    emission_cutoff: float = 200.0
    transition_cutoff: float = 2000.0
    speed_cutoff: float = 180.0
    backward_tolerance: float = 25.0
    # behaviors
    delta: float = 0.8
    min_duration: float = 180.0
    straight_tolerance: float = 5.0
    edge_evidence: float = 10.0
    # perspective
    theta: float = 60.0
    cluster_radius: float = 25.0
    bearing_bin: float = 45.0
    pose_count: int = 5
    min_approach_points: int = 4
    # restrictions
    association_radius: float = 60.0
    heading_tolerance: float = 60.0
    zone_max_distance: float = 100.0
    detector_endpoint: str = ""
    detector_batch: int = 32
    detector_retries: int = 3
    # violations and inference
    zeta: float = 50.0
    tz_offset: float = 0.0
    workers: int = 1

    _POSITIVE = ("sigma_floor", "beta_floor", "emission_cutoff", "transition_cutoff", "speed_cutoff", "delta",
                 "theta", "cluster_radius", "bearing_bin", "pose_count", "min_approach_points",
                 "association_radius", "heading_tolerance", "zone_max_distance", "zeta", "workers",
                 "detector_batch")
    _NON_NEGATIVE = ("sigma_z", "beta", "backward_tolerance", "min_duration", "straight_tolerance", "edge_evidence",
                     "detector_retries")
    _PATHS = ("network", "trajectories", "signs", "limits", "out_dir")

    def __post_init__(self):
        for name in self._POSITIVE:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)!r}")
        for name in self._NON_NEGATIVE:
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative, got {getattr(self, name)!r}")
        if not -14 <= self.tz_offset <= 14:
            raise ConfigError("tz_offset must be within [-14, 14] hours")
        if 360.0 % self.bearing_bin:
            raise ConfigError("bearing_bin must divide 360")

    def path(self, key: str) -> Path:
        return Path(self.out_dir) / ARTIFACTS[key]

    def hmm_params(self) -> HmmParams:
        return HmmParams(self.sigma_z or 5.0, self.beta or 5.0, self.emission_cutoff, self.transition_cutoff,
                         self.speed_cutoff, self.backward_tolerance)


def parse_config(text: str, base_dir: str | Path = ".", **overrides) -> PipelineConfig:
    """Parse ``key = value`` lines (``#`` starts a comment). Relative paths resolve against ``base_dir``."""
    types = {f.name: f.type for f in fields(PipelineConfig) if not f.name.startswith("_")}
    values: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = (part.strip() for part in line.partition("="))
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        if key.startswith("synth."):
            continue
        if key not in types:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _coerce(key, value, types[key], lineno)
    values.update({k: v for k, v in overrides.items() if v is not None})
    for key in PipelineConfig._PATHS:
        v = values.get(key)
        if v and not os.path.isabs(str(v)):
            values[key] = str(Path(base_dir) / str(v))
    return PipelineConfig(**values)


def _coerce(key: str, value: str, typ, lineno: int):
    try:
        if typ in ("float", float):
            return float(value)
        if typ in ("int", int):
            return int(value)
        return value
    except ValueError as exc:
        raise ConfigError(f"line {lineno}: bad value for {key}: {value!r}") from exc


def load_config(path: str | Path, **overrides) -> PipelineConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, path.parent, **overrides)


def synth_overrides(text: str) -> dict[str, str]:
    """``synth.<field> = value`` lines of a config file."""
    out = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        key, sep, value = (part.strip() for part in line.partition("="))
        if sep and key.startswith("synth."):
            out[key[len("synth."):]] = value
    return out


def write_config(cfg: PipelineConfig, dest: str | Path) -> None:
    with open(dest, "w", encoding="utf-8") as fh:
        for f in fields(cfg):
            if not f.name.startswith("_"):
                fh.write(f"{f.name} = {getattr(cfg, f.name)}\n")


# ---------------------------------------------------------------------------
# stage helpers


@dataclass
class RunReport:
    stages: dict[str, dict] = field(default_factory=dict)
    failed: dict | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=True)


def _require(path: str | Path, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise InputError(f"{what} file not found: {p}")
    return p


def _load_net(cfg: PipelineConfig) -> RoadNetwork:
    try:
        return load_network(_require(cfg.network, "network"))
    except (NetworkLoadError, NetworkStructureError) as exc:
        raise InputError(f"network {cfg.network}: {exc}") from exc


_WORKER_NET: RoadNetwork | None = None


def _init_worker(network_path: str) -> None:
    global _WORKER_NET
    _WORKER_NET = load_network(network_path)


def _match_chunk(args) -> list[MatchedTrajectory]:
    trajs, params = args
    out = []
    for t in trajs:
        out.extend(match(preprocess(t, params.sigma_z, params.speed_cutoff), _WORKER_NET, params))
    return out


def match_all(trajs: Sequence[PointTrajectory], net: RoadNetwork, params: HmmParams, workers: int = 1,
              network_path: str | None = None) -> list[MatchedTrajectory]:
    """Preprocess and match every trajectory; output order follows input order for any worker count."""
    if workers <= 1 or network_path is None or len(trajs) < 2:
        out = []
        for t in trajs:
            try:
                out.extend(match(preprocess(t, params.sigma_z, params.speed_cutoff), net, params))
            except Exception as exc:
                raise StageError("match", f"trajectory {t.traj_id}", exc) from exc
        return out
    size = math.ceil(len(trajs) / (workers * 4))
    chunks = [(list(trajs[i:i + size]), params) for i in range(0, len(trajs), size)]
    with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(network_path,)) as pool:
        return [m for part in pool.map(_match_chunk, chunks) for m in part]


def stage_match(cfg: PipelineConfig) -> dict:
    net = _load_net(cfg)
    try:
        trajs = [t for t in read_trajectories(_require(cfg.trajectories, "trajectory")) if t.fixes]
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    base = cfg.hmm_params()
    params = base
    if not (cfg.sigma_z and cfg.beta):
        est = estimate_params(trajs, net, base, cfg.sigma_floor, cfg.beta_floor)
        params = replace(base, sigma_z=cfg.sigma_z or est.sigma_z, beta=cfg.beta or est.beta)
    n_raw = sum(len(t) for t in trajs)
    t0 = time.perf_counter()
    matched = match_all(trajs, net, params, cfg.workers, cfg.network)
    elapsed = time.perf_counter() - t0
    write_matched(matched, cfg.path("matched"))
    cfg.path("params").write_text(json.dumps(asdict(params), sort_keys=True) + "\n", encoding="utf-8")
    n_matched = sum(len(m.matched) for m in matched)
    return {"trajectories": len(trajs), "raw_points": n_raw, "matched_points": n_matched,
            "pieces": len(matched), "sigma_z": params.sigma_z, "beta": params.beta,
            "match_seconds": elapsed, "points_per_second": n_raw / elapsed if elapsed > 0 else None}


def stage_behaviors(cfg: PipelineConfig) -> dict:
    net = _load_net(cfg)
    matched = read_matched(_require(cfg.path("matched"), "matched"), net)
    stats = bh.ExtractionStats()
    pparams = bh.ParkingParams(cfg.delta, cfg.min_duration, cfg.backward_tolerance)
    turns, parks, speeds = [], [], []
    for m in matched:
        try:
            turns.extend(bh.extract_turnings(m, net, cfg.straight_tolerance, stats, cfg.edge_evidence))
            parks.extend(bh.extract_parkings(m, pparams, net))
            speeds.extend(bh.extract_velocities(m, net, stats, cfg.edge_evidence))
        except Exception as exc:
            raise StageError("behaviors", f"trajectory {m.traj_id}", exc) from exc
    bh.write_turnings(turns, cfg.path("turnings"))
    bh.write_parkings(parks, cfg.path("parkings"))
    bh.write_speeds(speeds, cfg.path("speeds"))
    return {"turnings": len(turns), "parkings": len(parks), "speed_samples": len(speeds),
            "nonadjacent_transitions": stats.nonadjacent_transitions,
            "unobserved_edge_transitions": stats.unobserved_edge_transitions, "skipped_zero_dt": stats.skipped_zero_dt}


def _fixes_by_traj(matched: Sequence[MatchedTrajectory]):
    return {m.traj_id: m.fixes for m in matched}


def stage_perspective(cfg: PipelineConfig) -> dict:
    net = _load_net(cfg)
    turns = bh.read_turnings(_require(cfg.path("turnings"), "turnings"))
    matched = read_matched(_require(cfg.path("matched"), "matched"), net)
    fixes = _fixes_by_traj(matched)
    by_traj: dict[str, list[bh.TurningBehavior]] = {}
    for tn in turns:
        by_traj.setdefault(tn.traj_id, []).append(tn)
    inters = ps.detect_intersections(turns, cfg.cluster_radius)
    assigned = ps.assign_intersections(turns, inters) if inters else []
    index_of = {id(tn): k for k, tn in enumerate(turns)}
    bunches: list[ps.Bunch] = []
    for it in inters:
        members = [tn for tn, iid in zip(turns, assigned) if iid == it.id]
        bunches.extend(ps.group_bunches(members, it, cfg.bearing_bin))
    poses: dict[str, list[ps.ViewPose]] = {}
    skipped = 0
    for b in bunches:
        try:
            pts = ps.select_approach_points(b, fixes, by_traj, cfg.theta, cfg.min_approach_points)
            curve = ps.fit_cubic(pts, fallback=True)
        except (ps.InsufficientDataError, ps.DegenerateFitError) as exc:
            log.info("bunch %s: no perspective curve (%s)", b.id, exc)
            skipped += 1
            continue
        except Exception as exc:
            raise StageError("perspective", f"bunch {b.id}", exc) from exc
        poses[b.id] = ps.sample_view_poses(curve, cfg.pose_count, net)
    with open(cfg.path("intersections"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["intersection_id", "lat", "lng"])
        for it in inters:
            w.writerow([it.id, repr(it.location.lat), repr(it.location.lng)])
    with open(cfg.path("bunches"), "w", encoding="utf-8") as fh:
        for b in bunches:
            fh.write(json.dumps({"bunch_id": b.id, "intersection_id": b.intersection_id,
                                 "lat": b.location.lat, "lng": b.location.lng, "bb": b.bb,
                                 "members": [index_of[id(tn)] for tn in b.members]}) + "\n")
    ps.write_manifest(poses, cfg.path("manifest"))
    return {"intersections": len(inters), "bunches": len(bunches), "curves": len(poses),
            "skipped_bunches": skipped, "view_poses": sum(len(v) for v in poses.values())}


def read_bunches(source: str | Path, turns: Sequence[bh.TurningBehavior] = ()) -> list[ps.Bunch]:
    out = []
    with open(source, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                r = json.loads(line)
                members = [turns[k] for k in r["members"]] if turns else []
                out.append(ps.Bunch(r["bunch_id"], r["intersection_id"], GeoPoint(r["lat"], r["lng"]), r["bb"],
                                    members))
    return out


def read_bunch_members(source: str | Path) -> dict[int, str]:
    """Turn row index -> bunch id."""
    out = {}
    with open(source, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                r = json.loads(line)
                for k in r["members"]:
                    out[k] = r["bunch_id"]
    return out


def read_intersections(source: str | Path) -> list[Intersection]:
    with open(source, newline="", encoding="utf-8") as fh:
        return [Intersection(r["intersection_id"], GeoPoint(float(r["lat"]), float(r["lng"])))
                for r in csv.DictReader(fh)]


def stage_restrict(cfg: PipelineConfig) -> dict:
    net = _load_net(cfg)
    signs = rs.load_sign_inventory(_require(cfg.signs, "sign inventory")) if cfg.signs else []
    manifest = ps.read_manifest(_require(cfg.path("manifest"), "manifest"))
    rstats = rs.RestrictionStats()
    n_detected = 0
    if cfg.detector_endpoint and manifest:
        try:
            detected = rs.query_detector(manifest, cfg.detector_endpoint, cfg.detector_batch,
                                         cfg.detector_retries, stats=rstats)
        except (rs.DetectorTransportError, rs.DetectorProtocolError) as exc:
            raise StageError("restrict", f"detector {cfg.detector_endpoint}", exc) from exc
        n_detected = len(detected)
        signs = signs + detected
    bunches = read_bunches(_require(cfg.path("bunches"), "bunches"))
    rules = rs.associate_turn_signs(signs, bunches, manifest, cfg.association_radius, cfg.heading_tolerance)
    zones = rs.build_no_parking_zones(signs, net, cfg.zone_max_distance, rstats)
    with open(cfg.path("signs_used"), "w", encoding="utf-8") as fh:
        for s in signs:
            fh.write(json.dumps(rs.sign_to_dict(s, True)) + "\n")
    rs.write_rules(rules, cfg.path("rules"))
    rs.write_zones(zones, cfg.path("zones"))
    return {"signs": len(signs), "detected_signs": n_detected, "no_turn_rules": len(rules),
            "no_parking_zones": len(zones), "skipped_far_signs": rstats.skipped_far_signs,
            "detector_retries": rstats.retries}


def _limits(cfg: PipelineConfig) -> list[rs.SpeedLimit]:
    return rs.load_speed_limits(_require(cfg.limits, "speed limit")) if cfg.limits else []


def stage_violations(cfg: PipelineConfig) -> dict:
    net = _load_net(cfg)
    turns = bh.read_turnings(_require(cfg.path("turnings"), "turnings"))
    parks = bh.read_parkings(_require(cfg.path("parkings"), "parkings"))
    speeds = bh.read_speeds(_require(cfg.path("speeds"), "speeds"))
    members = read_bunch_members(_require(cfg.path("bunches"), "bunches"))
    bunches = read_bunches(cfg.path("bunches"))
    rules = rs.read_rules(_require(cfg.path("rules"), "rules"))
    zones = rs.read_zones(_require(cfg.path("zones"), "zones"))
    bunch_of = [members.get(k) for k in range(len(turns))]
    intersection_of = {b.id: b.intersection_id for b in bunches}
    dstats = vi.DetectionStats()
    found = vi.detect_illegal_turns(turns, bunch_of, rules, intersection_of)
    found += vi.detect_illegal_parking(parks, zones, cfg.zeta, net, dstats)
    found += vi.detect_speeding(speeds, _limits(cfg), dstats)
    found.sort(key=lambda v: (v.t, v.kind.value, v.location_ref, v.behavior_ref))
    vi.write_violations(found, cfg.path("violations"))
    matched_span = _span_from_matched(cfg.path("matched"))
    cfg.path("span").write_text(json.dumps({"start": matched_span[0], "end": matched_span[1]}) + "\n",
                                encoding="utf-8")
    counts = {k.value: sum(1 for v in found if v.kind is k) for k in vi.ViolationKind}
    return {"violations": len(found), **counts, "uncovered_speed_samples": dstats.uncovered_speed_samples,
            "unzoned_parkings": dstats.unzoned_parkings}


def _span_from_matched(path: Path) -> tuple[float, float]:
    lo, hi = math.inf, -math.inf
    with open(path, newline="", encoding="utf-8") as fh:
        for r in csv.DictReader(fh):
            t = float(r["timestamp"])
            lo, hi = min(lo, t), max(hi, t)
    return (lo, hi) if lo <= hi else (0.0, 0.0)


def candidates(cfg: PipelineConfig) -> list[tuple[str, vi.ViolationKind]]:
    """Restricted locations: intersections with a no-turn rule, zoned segments, roads with a limit."""
    bunches = {b.id: b.intersection_id for b in read_bunches(cfg.path("bunches"))}
    out = {(bunches.get(r.bunch_id, r.bunch_id), vi.ViolationKind.ILLEGAL_TURN)
           for r in rs.read_rules(cfg.path("rules"))}
    out |= {(z.segment_id, vi.ViolationKind.ILLEGAL_PARKING) for z in rs.read_zones(cfg.path("zones"))}
    out |= {(lim.road_name, vi.ViolationKind.SPEEDING) for lim in _limits(cfg)}
    return sorted(out)


def stage_infer(cfg: PipelineConfig) -> dict:
    found = vi.read_violations(_require(cfg.path("violations"), "violations"))
    span_doc = json.loads(_require(cfg.path("span"), "span").read_text(encoding="utf-8"))
    span = (span_doc["start"], span_doc["end"])
    if found:
        span = (min(span[0], min(v.t for v in found)), max(span[1], max(v.t for v in found)))
    profiles = vi.build_profiles(found, span, cfg.tz_offset, candidates(cfg))
    typicals = [vi.typical_day(p) for p in profiles]
    vi.write_profiles(profiles, cfg.path("profiles"))
    vi.write_typicals(typicals, cfg.path("typical"))
    if not typicals:
        cfg.path("thresholds").write_text("", encoding="utf-8")
        write_prone([], cfg.path("prone"))
        return {"candidates": 0, "prone_locations": 0}
    ts = vi.compute_thresholds(typicals)
    vi.write_thresholds(ts, cfg.path("thresholds"))
    prone = vi.infer_prone_locations(typicals, ts)
    write_prone(prone, cfg.path("prone"))
    return {"candidates": len(typicals), "hours": profiles[0].hours, "prone_locations": len(prone),
            "prone_by_kind": {k.value: sum(1 for p in prone if p.kind is k) for k in vi.ViolationKind}}


def write_prone(prone: Sequence[vi.ProneLocation], dest: str | Path) -> None:
    with open(dest, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kind", "location_ref", "hour", "typical", "threshold"])
        for p in prone:
            for j, tv, th in p.hours:
                w.writerow([p.kind.value, p.location_ref, j, repr(tv), repr(th)])


def read_prone(source: str | Path) -> list[vi.ProneLocation]:
    out: dict[tuple[str, str], vi.ProneLocation] = {}
    with open(source, newline="", encoding="utf-8") as fh:
        for r in csv.DictReader(fh):
            key = (r["kind"], r["location_ref"])
            loc = out.setdefault(key, vi.ProneLocation(r["location_ref"], vi.ViolationKind(r["kind"])))
            loc.hours.append((int(r["hour"]), float(r["typical"]), float(r["threshold"])))
    return list(out.values())


# ---------------------------------------------------------------------------
# GeoJSON export


def location_geometry(kind: vi.ViolationKind, ref: str, net: RoadNetwork,
                      intersections: dict[str, GeoPoint]) -> dict:
    """Point for an intersection, LineString for a segment, MultiLineString for a road."""
    if kind is vi.ViolationKind.ILLEGAL_TURN:
        p = intersections[ref]
        return {"type": "Point", "coordinates": [p.lng, p.lat]}
    if kind is vi.ViolationKind.ILLEGAL_PARKING:
        seg = net.segment(ref)
        return {"type": "LineString", "coordinates": [[p.lng, p.lat] for p in seg.geometry]}
    lines = [[[p.lng, p.lat] for p in s.geometry] for s in net.segments_of_road(ref)]
    return {"type": "MultiLineString", "coordinates": lines}


def export_geojson(prone: Sequence[vi.ProneLocation], typicals: Sequence[vi.TypicalDayProfile],
                   thresholds: vi.ThresholdSet | None, geometry: Callable[[vi.ViolationKind, str], dict],
                   hour: int | None = None) -> dict:
    """FeatureCollection of prone locations, optionally only those prone at ``hour``."""
    if hour is not None and not 0 <= hour < vi.HOURS_PER_DAY:
        raise ValueError("hour must be in 0..23")
    tmap = {(t.kind, t.location_ref): t for t in typicals}
    th = [float(x) for x in thresholds.th] if thresholds is not None else []
    features = []
    for p in sorted(prone, key=lambda q: (q.kind.value, q.location_ref)):
        hours = sorted(j for j, _, _ in p.hours)
        if hour is not None and hour not in hours:
            continue
        tp = tmap.get((p.kind, p.location_ref))
        features.append({
            "type": "Feature",
            "geometry": geometry(p.kind, p.location_ref),
            "properties": {"kind": p.kind.value, "location_ref": p.location_ref, "prone_hours": hours,
                           "typical": [float(x) for x in tp.means] if tp is not None else [],
                           "threshold": th},
        })
    return {"type": "FeatureCollection", "features": features}


def import_geojson(doc: dict) -> list[vi.ProneLocation]:
    """Prone locations back from an exported FeatureCollection."""
    if doc.get("type") != "FeatureCollection":
        raise ValueError("not a FeatureCollection")
    out = []
    for feat in doc["features"]:
        props = feat["properties"]
        typical, th = props.get("typical", []), props.get("threshold", [])
        hours = [(j, typical[j] if typical else math.nan, th[j] if th else math.nan) for j in props["prone_hours"]]
        out.append(vi.ProneLocation(props["location_ref"], vi.ViolationKind(props["kind"]), hours))
    return out


def stage_export(cfg: PipelineConfig, hour: int | None = None) -> dict:
    net = _load_net(cfg)
    prone = read_prone(_require(cfg.path("prone"), "prone"))
    typicals = vi.read_typicals(_require(cfg.path("typical"), "typical"))
    th_path = cfg.path("thresholds")
    thresholds = vi.read_thresholds(th_path) if th_path.is_file() and th_path.stat().st_size else None
    inters = {it.id: it.location for it in read_intersections(_require(cfg.path("intersections"), "intersections"))}
    doc = export_geojson(prone, typicals, thresholds, lambda k, r: location_geometry(k, r, net, inters), hour)
    dest = cfg.path("geojson") if hour is None else Path(cfg.out_dir) / f"prone_h{hour:02d}.geojson"
    dest.write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")
    return {"features": len(doc["features"]), "file": dest.name}


# ---------------------------------------------------------------------------
# run


STAGE_FUNCS: dict[str, Callable[[PipelineConfig], dict]] = {
    "match": stage_match,
    "behaviors": stage_behaviors,
    "perspective": stage_perspective,
    "restrict": stage_restrict,
    "violations": stage_violations,
    "infer": stage_infer,
    "export": stage_export,
}


def check_inputs(cfg: PipelineConfig) -> None:
    _require(cfg.network, "network")
    _require(cfg.trajectories, "trajectory")
    if cfg.signs:
        _require(cfg.signs, "sign inventory")
    if cfg.limits:
        _require(cfg.limits, "speed limit")


def run(cfg: PipelineConfig, stages: Sequence[str] = STAGES, hour: int | None = None) -> RunReport:
    """Run stages in order, persisting every artifact and a ``report.json``.

    Input paths are checked before any work. A failing stage raises
    ``StageError`` after the report (naming the stage) is written; artifacts
    of earlier stages are left as they were.
    """
    unknown = [s for s in stages if s not in STAGE_FUNCS]
    if unknown:
        raise ConfigError(f"unknown stage(s): {', '.join(unknown)}")
    if "match" in stages:
        check_inputs(cfg)
    Path(cfg.out_dir).mkdir(parents=True, exist_ok=True)
    report = RunReport()
    for name in STAGES:
        if name not in stages:
            continue
        t0 = time.perf_counter()
        try:
            counts = stage_export(cfg, hour) if name == "export" else STAGE_FUNCS[name](cfg)
        except (InputError, ConfigError):
            raise
        except StageError as exc:
            report.failed = {"stage": exc.stage, "record": exc.record, "cause": str(exc.cause)}
            cfg.path("report").write_text(report.to_json() + "\n", encoding="utf-8")
            raise
        except Exception as exc:
            report.failed = {"stage": name, "record": "", "cause": f"{type(exc).__name__}: {exc}"}
            cfg.path("report").write_text(report.to_json() + "\n", encoding="utf-8")
            raise StageError(name, "stage input", exc) from exc
        counts["seconds"] = time.perf_counter() - t0
        report.stages[name] = counts
        log.info("stage %s: %s", name, counts)
    cfg.path("report").write_text(report.to_json() + "\n", encoding="utf-8")
    return report
