"""Traffic-rule context: sign inventory, detector client, rule association, speed limits."""
from __future__ import annotations

import csv
import json
import logging
import time
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .behaviors import TurnType
from .perspective import Bunch, ViewPose
from .roadnet import GeoPoint, RoadNetwork, angle_diff, bearing, direct_distance

log = logging.getLogger(__name__)


class SignType(str, Enum):
    NO_LEFT_TURN = "no_left_turn"
    NO_RIGHT_TURN = "no_right_turn"
    NO_U_TURN = "no_u_turn"
    NO_PARKING = "no_parking"


FORBIDS: dict[SignType, TurnType] = {
    SignType.NO_LEFT_TURN: TurnType.LEFT,
    SignType.NO_RIGHT_TURN: TurnType.RIGHT,
    SignType.NO_U_TURN: TurnType.U_TURN,
}


class InventoryError(ValueError):
    pass


class DetectorTransportError(RuntimeError):
    pass


class DetectorProtocolError(ValueError):
    pass


@dataclass(frozen=True)
class SignRecord:
    sign_type: SignType
    location: GeoPoint
    visible_heading: float | None = None
    confidence: float = 1.0
    source: str = "inventory"

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")
        if self.source not in ("inventory", "detector"):
            raise ValueError(f"unknown sign source {self.source!r}")


@dataclass(frozen=True)
class NoTurnRule:
    bunch_id: str
    forbidden: SignType
    evidence: tuple[SignRecord, ...] = ()


@dataclass(frozen=True)
class NoParkingZone:
    segment_id: str
    sign: SignRecord


@dataclass(frozen=True)
class SpeedLimit:
    road_name: str
    limit: float

    def __post_init__(self):
        if not self.limit > 0:
            raise ValueError(f"speed limit for {self.road_name!r} must be positive")


@dataclass
class RestrictionStats:
    skipped_far_signs: int = 0
    duplicate_limits: int = 0
    retries: int = 0


# ---------------------------------------------------------------------------
# sign inventory


def _sign_from_dict(rec: dict, source: str | None = None) -> SignRecord:
    heading = rec.get("visible_heading")
    return SignRecord(SignType(rec["sign_type"]), GeoPoint(float(rec["lat"]), float(rec["lng"])),
                      None if heading is None else float(heading) % 360.0,
                      float(rec.get("confidence", 1.0)), source or rec.get("source", "inventory"))


def load_sign_inventory(source: str | Path) -> list[SignRecord]:
    """Read a JSON Lines sign inventory."""
    out = []
    with open(source, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(_sign_from_dict(json.loads(line), "inventory"))
            except (ValueError, KeyError, TypeError) as exc:
                raise InventoryError(f"{source}: line {lineno}: {exc}") from exc
    return out


def sign_to_dict(sign: SignRecord, with_source: bool = False) -> dict:
    rec = {"sign_type": sign.sign_type.value, "lat": sign.location.lat, "lng": sign.location.lng,
           "visible_heading": sign.visible_heading, "confidence": sign.confidence}
    if with_source:
        rec["source"] = sign.source
    return rec


def write_sign_inventory(signs: Iterable[SignRecord], dest: str | Path) -> None:
    with open(dest, "w", encoding="utf-8") as fh:
        for s in signs:
            fh.write(json.dumps(sign_to_dict(s)) + "\n")


# ---------------------------------------------------------------------------
# detector client


def _post_json(url: str, payload: dict, timeout: float) -> dict:
    req = urllib.request.Request(url, data=json.dumps(payload).encode("utf-8"),
                                 headers={"Content-Type": "application/json"}, method="POST")
    with urllib.request.urlopen(req, timeout=timeout) as resp:
        body = resp.read()
    try:
        return json.loads(body)
    except json.JSONDecodeError as exc:
        raise DetectorProtocolError(f"response is not JSON: {exc}") from exc


def _query_batch(endpoint: str, batch: list[tuple[str, ViewPose]], retries: int, backoff: float,
                 timeout: float, stats: RestrictionStats | None) -> list[SignRecord]:
    payload = {"poses": [{"id": pid, "lat": p.location.lat, "lng": p.location.lng,
                          "heading": p.heading, "fov": p.fov} for pid, p in batch]}
    for attempt in range(retries + 1):
        try:
            resp = _post_json(endpoint, payload, timeout)
            break
        except (urllib.error.URLError, ConnectionError, TimeoutError) as exc:
            if isinstance(exc, urllib.error.HTTPError) and exc.code < 500:
                raise DetectorProtocolError(f"detector rejected request: HTTP {exc.code}") from exc
            if attempt == retries:
                raise DetectorTransportError(f"detector unreachable after {retries} retries: {exc}") from exc
            log.warning("detector request failed (%s); retry %d/%d", exc, attempt + 1, retries)
            if stats is not None:
                stats.retries += 1
            time.sleep(backoff * 2 ** attempt)

    poses = dict(batch)
    dets = resp.get("detections") if isinstance(resp, dict) else None
    if not isinstance(dets, list):
        raise DetectorProtocolError("response lacks a 'detections' list")
    out = []
    for det in dets:
        try:
            pose = poses[det["pose_id"]]
            kind = SignType(det["sign_type"])
            conf = float(det["confidence"])
            out.append(SignRecord(kind, pose.location, pose.heading, conf, "detector"))
        except (KeyError, ValueError, TypeError) as exc:
            raise DetectorProtocolError(f"malformed detection {det!r}: {exc}") from exc
    return out


def query_detector(manifest: Mapping[str, Sequence[ViewPose]], endpoint: str, batch_size: int = 32,
                   retries: int = 3, backoff: float = 0.1, timeout: float = 10.0, max_in_flight: int = 4,
                   stats: RestrictionStats | None = None) -> list[SignRecord]:
    """Send view poses to an external sign detector and map detections to sign records.

    Pose ids are ``<bunch_id>#<seq>``. Transient failures (connection errors,
    HTTP 5xx) are retried with exponential backoff.
    """
    poses = [(f"{bid}#{k}", pose) for bid in sorted(manifest) for k, pose in enumerate(manifest[bid])]
    batches = [poses[i:i + batch_size] for i in range(0, len(poses), batch_size)]
    if not batches:
        return []
    with ThreadPoolExecutor(max_workers=max(1, max_in_flight)) as pool:
        results = list(pool.map(lambda b: _query_batch(endpoint, b, retries, backoff, timeout, stats), batches))
    return [rec for batch in results for rec in batch]


# ---------------------------------------------------------------------------
# association


def governed_intersection(sign: SignRecord, intersections: Mapping[str, GeoPoint],
                          heading_tol: float = 60.0) -> str | None:
    """The intersection a turn sign applies to: the nearest one ahead of it.

    "Ahead" means the bearing from sign to intersection is within
    ``heading_tol`` of the sign's visible heading; signs without a heading
    govern the nearest intersection.
    """
    best = None
    for iid, loc in intersections.items():
        d = direct_distance(sign.location, loc)
        if sign.visible_heading is not None and d > 0:
            if angle_diff(bearing(sign.location, loc), sign.visible_heading) > heading_tol:
                continue
        key = (d, iid)
        if best is None or key < best:
            best = key
    return None if best is None else best[1]


def associate_turn_signs(signs: Sequence[SignRecord], bunches: Sequence[Bunch],
                         poses: Mapping[str, Sequence[ViewPose]], radius: float = 60.0,
                         heading_tol: float = 60.0) -> list[NoTurnRule]:
    """Attach turn-restriction signs to the bunches whose view poses see them.

    A sign attaches to a bunch at its governed intersection when some pose of
    that bunch lies within ``radius`` and, if the sign has a visible heading,
    that pose faces within ``heading_tol`` of it.
    """
    intersections = {b.intersection_id: b.location for b in bunches}
    evidence: dict[tuple[str, SignType], list[SignRecord]] = {}
    for sign in signs:
        if sign.sign_type not in FORBIDS:
            continue
        target = governed_intersection(sign, intersections, heading_tol)
        for bunch in bunches:
            if bunch.intersection_id != target:
                continue
            for pose in poses.get(bunch.id, ()):
                if direct_distance(pose.location, sign.location) > radius:
                    continue
                if sign.visible_heading is not None and angle_diff(pose.heading, sign.visible_heading) > heading_tol:
                    continue
                evidence.setdefault((bunch.id, sign.sign_type), []).append(sign)
                break
    return [NoTurnRule(bid, kind, tuple(ev)) for (bid, kind), ev in sorted(evidence.items())]


def build_no_parking_zones(signs: Sequence[SignRecord], net: RoadNetwork, max_distance: float = 100.0,
                           stats: RestrictionStats | None = None) -> list[NoParkingZone]:
    """Map each no-parking sign to its nearest segment (lower id on ties)."""
    zones = []
    for sign in signs:
        if sign.sign_type is not SignType.NO_PARKING:
            continue
        proj = net.nearest_segment(sign.location, max_distance)
        if proj is None:
            log.info("no-parking sign at %s is over %.0f m from any segment; skipped", sign.location, max_distance)
            if stats is not None:
                stats.skipped_far_signs += 1
            continue
        zones.append(NoParkingZone(proj.segment_id, sign))
    return zones


# ---------------------------------------------------------------------------
# speed limits


def load_speed_limits(source: str | Path, stats: RestrictionStats | None = None) -> list[SpeedLimit]:
    """Read ``road_name,limit_kmh`` CSV; a repeated road name keeps the last value."""
    table: dict[str, SpeedLimit] = {}
    with open(source, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.DictReader(fh), 2):
            try:
                limit = SpeedLimit(row["road_name"], float(row["limit_kmh"]))
            except (KeyError, TypeError, ValueError) as exc:
                raise InventoryError(f"{source}: line {lineno}: {exc}") from exc
            if limit.road_name in table:
                log.warning("duplicate speed limit for %r; keeping the later value", limit.road_name)
                if stats is not None:
                    stats.duplicate_limits += 1
            table[limit.road_name] = limit
    return list(table.values())


def write_speed_limits(limits: Iterable[SpeedLimit], dest: str | Path) -> None:
    with open(dest, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["road_name", "limit_kmh"])
        for lim in limits:
            w.writerow([lim.road_name, repr(lim.limit)])


# ---------------------------------------------------------------------------
# rule tables


def write_rules(rules: Iterable[NoTurnRule], dest: str | Path) -> None:
    with open(dest, "w", encoding="utf-8") as fh:
        for r in rules:
            fh.write(json.dumps({"bunch_id": r.bunch_id, "forbidden": r.forbidden.value,
                                 "evidence": [sign_to_dict(s, True) for s in r.evidence]}) + "\n")


def read_rules(source: str | Path) -> list[NoTurnRule]:
    out = []
    with open(source, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                out.append(NoTurnRule(rec["bunch_id"], SignType(rec["forbidden"]),
                                      tuple(_sign_from_dict(s) for s in rec["evidence"])))
    return out


def write_zones(zones: Iterable[NoParkingZone], dest: str | Path) -> None:
    with open(dest, "w", encoding="utf-8") as fh:
        for z in zones:
            fh.write(json.dumps({"segment_id": z.segment_id, "sign": sign_to_dict(z.sign, True)}) + "\n")


def read_zones(source: str | Path) -> list[NoParkingZone]:
    out = []
    with open(source, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                out.append(NoParkingZone(rec["segment_id"], _sign_from_dict(rec["sign"])))
    return out
