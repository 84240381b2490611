import json
import shutil
from dataclasses import replace
from pathlib import Path

import pytest
import shapely.geometry

from oracles import geojson_errors
from violmap import pipeline as pl
from violmap.roadnet import GeoPoint, direct_distance
from violmap.violations import ProneLocation, ViolationKind

DETERMINISTIC = sorted(set(pl.ARTIFACTS.values()) - {"report.json"})


def files(out_dir):
    return {name: (Path(out_dir) / name).read_bytes() for name in DETERMINISTIC}


def test_every_stage_reports_work(small_run):
    _, report, _ = small_run
    assert report.failed is None
    assert list(report.stages) == list(pl.STAGES)
    s = report.stages
    assert s["match"]["matched_points"] > 0 and s["match"]["points_per_second"] > 0
    assert s["behaviors"]["turnings"] > 0 and s["behaviors"]["parkings"] > 0 and s["behaviors"]["speed_samples"] > 0
    assert s["perspective"]["intersections"] == 9 and s["perspective"]["view_poses"] > 0
    assert s["restrict"]["no_turn_rules"] == 4 and s["restrict"]["no_parking_zones"] == 4
    assert all(s["violations"][k.value] > 0 for k in ViolationKind)
    assert s["infer"]["prone_locations"] > 0
    assert s["export"]["features"] == s["infer"]["prone_locations"]
    saved = json.loads(Path(small_run[0].path("report")).read_text())
    assert saved["stages"]["match"]["matched_points"] == s["match"]["matched_points"]


def test_all_artifacts_written(small_run):
    cfg = small_run[0]
    for key in pl.ARTIFACTS:
        assert cfg.path(key).is_file(), key


def test_rerun_is_byte_identical(small_run, tmp_path):
    cfg = replace(small_run[0], out_dir=str(tmp_path / "again"))
    pl.run(cfg)
    assert files(cfg.out_dir) == files(small_run[0].out_dir)


def test_worker_count_does_not_change_output(small_run, tmp_path):
    cfg = replace(small_run[0], out_dir=str(tmp_path / "w2"), workers=2)
    pl.run(cfg)
    assert files(cfg.out_dir) == files(small_run[0].out_dir)


PRODUCES = {
    "match": ["matched.csv", "hmm_params.json"],
    "behaviors": ["turnings.csv", "parkings.csv", "speeds.csv"],
    "perspective": ["intersections.csv", "bunches.jsonl", "manifest.jsonl"],
    "restrict": ["signs_used.jsonl", "rules.jsonl", "zones.jsonl"],
    "violations": ["violations.csv", "span.json"],
    "infer": ["profiles.csv", "typical.csv", "thresholds.csv", "prone.csv"],
    "export": ["prone.geojson"],
}


def test_stage_outputs_cover_every_artifact():
    assert sorted(f for fs in PRODUCES.values() for f in fs) == DETERMINISTIC


@pytest.mark.parametrize("start", ["behaviors", "perspective", "restrict", "infer", "export"])
def test_resume_from_stage_equals_full_run(small_run, tmp_path, start):
    src = small_run[0]
    dst = tmp_path / "resume"
    shutil.copytree(src.out_dir, dst)
    later = pl.STAGES[pl.STAGES.index(start):]
    for name in later:
        for fname in PRODUCES[name]:
            (dst / fname).unlink()
    pl.run(replace(src, out_dir=str(dst)), later)
    assert files(dst) == files(src.out_dir)


def test_missing_trajectories_fail_before_work(small_run, tmp_path):
    cfg = replace(small_run[0], trajectories=str(tmp_path / "nope.csv"), out_dir=str(tmp_path / "o"))
    with pytest.raises(pl.InputError, match="trajectory"):
        pl.run(cfg)
    assert not (tmp_path / "o").exists()


def test_stage_failure_names_stage_and_keeps_outputs(small_run, tmp_path):
    dst = tmp_path / "broken"
    shutil.copytree(small_run[0].out_dir, dst)
    cfg = replace(small_run[0], out_dir=str(dst))
    before = (dst / "turnings.csv").read_bytes()
    (dst / "bunches.jsonl").write_text('{"bunch_id": "X", "members": "oops"}\n')
    with pytest.raises(pl.StageError) as info:
        pl.run(cfg, ("violations",))
    assert info.value.stage == "violations"
    report = json.loads((dst / "report.json").read_text())
    assert report["failed"]["stage"] == "violations"
    assert (dst / "turnings.csv").read_bytes() == before


# --- configuration ---------------------------------------------------------------------


def test_config_round_trip(tmp_path):
    cfg = pl.PipelineConfig(network="net.txt", zeta=30.0, workers=3, tz_offset=8.0)
    pl.write_config(cfg, tmp_path / "c.conf")
    back = pl.load_config(tmp_path / "c.conf")
    assert back.zeta == 30.0 and back.workers == 3 and back.tz_offset == 8.0
    assert back.network == str(tmp_path / "net.txt")


def test_config_defaults_match_module_defaults():
    from violmap.behaviors import ParkingParams
    from violmap.mapmatch import HmmParams
    cfg = pl.PipelineConfig()
    hp, pp = HmmParams(), ParkingParams()
    assert (cfg.emission_cutoff, cfg.transition_cutoff, cfg.speed_cutoff) == \
        (hp.emission_cutoff, hp.transition_cutoff, hp.speed_cutoff)
    assert (cfg.delta, cfg.min_duration, cfg.backward_tolerance) == (pp.delta, pp.min_duration, pp.backward_tolerance)
    assert (cfg.theta, cfg.cluster_radius, cfg.bearing_bin, cfg.pose_count, cfg.zeta) == (60, 25, 45, 5, 50)


@pytest.mark.parametrize("text, msg", [("zeta = -1", "zeta"), ("bogus = 3", "unknown key"), ("zeta = abc", "bad value"),
                                       ("just words", "key = value"), ("bearing_bin = 50", "divide 360"),
                                       ("tz_offset = 20", "tz_offset"), ("workers = 0", "workers")])
def test_config_errors(text, msg):
    with pytest.raises(pl.ConfigError, match=msg):
        pl.parse_config(text)


def test_config_comments_and_synth_keys():
    cfg = pl.parse_config("# header\nzeta = 40  # metres\nsynth.seed = 3\n\n")
    assert cfg.zeta == 40.0
    assert pl.synth_overrides("synth.seed = 3\nzeta = 1\n") == {"seed": "3"}


def test_unknown_stage():
    with pytest.raises(pl.ConfigError):
        pl.run(pl.PipelineConfig(), ("nonsense",))


# --- GeoJSON export ----------------------------------------------------------------------


def test_geojson_is_valid_and_round_trips(small_run):
    cfg = small_run[0]
    doc = json.loads(cfg.path("geojson").read_text())
    assert geojson_errors(doc) == []
    for f in doc["features"]:
        assert shapely.geometry.shape(f["geometry"]).is_valid
        props = f["properties"]
        assert len(props["typical"]) == 24 and len(props["threshold"]) == 24
        assert all(props["typical"][h] > props["threshold"][h] for h in props["prone_hours"])
    back = pl.import_geojson(doc)
    stored = pl.read_prone(cfg.path("prone"))
    key = lambda p: (p.kind.value, p.location_ref)  # noqa: E731
    assert sorted(((key(p), sorted(h for h, _, _ in p.hours)) for p in back)) == \
        sorted(((key(p), sorted(h for h, _, _ in p.hours)) for p in stored))
    for p, q in zip(sorted(back, key=key), sorted(stored, key=key)):
        assert [(h, tv, th) for h, tv, th in sorted(p.hours)] == pytest.approx(sorted(q.hours))


def test_empty_and_filtered_exports():
    empty = pl.export_geojson([], [], None, lambda k, r: {})
    assert empty == {"type": "FeatureCollection", "features": []}
    prone = [ProneLocation("Main St", ViolationKind.SPEEDING, [(22, 3.0, 1.0)])]
    geom = lambda k, r: {"type": "MultiLineString", "coordinates": [[[118.0, 24.0], [118.001, 24.0]]]}  # noqa: E731
    assert len(pl.export_geojson(prone, [], None, geom, hour=22)["features"]) == 1
    assert pl.export_geojson(prone, [], None, geom, hour=5)["features"] == []
    with pytest.raises(ValueError):
        pl.export_geojson(prone, [], None, geom, hour=24)


def test_hour_filtered_file(small_run, tmp_path):
    dst = tmp_path / "hour"
    shutil.copytree(small_run[0].out_dir, dst)
    cfg = replace(small_run[0], out_dir=str(dst))
    prone = pl.read_prone(cfg.path("prone"))
    hour = prone[0].hours[0][0]
    pl.run(cfg, ("export",), hour=hour)
    doc = json.loads((dst / f"prone_h{hour:02d}.geojson").read_text())
    assert geojson_errors(doc) == []
    assert 1 <= len(doc["features"]) <= len(prone)
    assert all(hour in f["properties"]["prone_hours"] for f in doc["features"])


def test_hotspot_features_at_planted_places(small_run, small_sim):
    cfg, _, paths = small_run
    planted = json.loads(paths["planted"].read_text())["hotspots"]
    doc = json.loads(cfg.path("geojson").read_text())
    by_kind = {}
    for f in doc["features"]:
        by_kind.setdefault(f["properties"]["kind"], []).append(f)
    turn = planted["illegal_turn"]
    assert any(direct_distance(GeoPoint(f["geometry"]["coordinates"][1], f["geometry"]["coordinates"][0]),
                               GeoPoint(turn["lat"], turn["lng"])) <= cfg.cluster_radius
               for f in by_kind["illegal_turn"])
    zone = small_sim.net.segment(planted["illegal_parking"]["location_ref"])
    assert any(f["properties"]["location_ref"] == zone.id for f in by_kind["illegal_parking"])
    assert any(f["properties"]["location_ref"] == planted["speeding"]["location_ref"] for f in by_kind["speeding"])
