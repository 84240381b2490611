import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import geo, make_network
from hmm_instances import oracle_match, random_instance
from oracles import exhaustive_decode, exhaustive_decode_loop
from violmap.mapmatch import (EmptyTrajectoryError, GpsFix, HmmParams, MatchedTrajectory, ParameterEstimationError,
                              PointTrajectory, emission_prob, estimate_beta, estimate_params, estimate_sigma,
                              log_emission, log_transition, match, preprocess, read_matched, read_trajectories,
                              to_segment_route, transition_prob, viterbi, write_matched)
from violmap.roadnet import GeoPoint


def traj_from(points, dt=5.0, tid="t"):
    return PointTrajectory(tid, tuple(GpsFix(tid, k * dt, geo(x, y)) for k, (x, y) in enumerate(points)))


# --- parameter estimation -------------------------------------------------


def test_sigma_constant():
    assert estimate_sigma([3, 5, 7]) == pytest.approx(7.413, abs=1e-9)


def test_beta_constant():
    assert estimate_beta([2, 4, 9]) == pytest.approx(4 / math.log(2), abs=1e-12)
    assert estimate_beta([2, 4, 9]) == pytest.approx(5.77078, abs=1e-4)


def test_floors_and_empty():
    assert estimate_sigma([0, 0, 0]) == 1.0
    assert estimate_beta([0.1], floor=2.0) == 2.0
    with pytest.raises(ParameterEstimationError):
        estimate_sigma([])
    with pytest.raises(ParameterEstimationError):
        estimate_beta([])


def test_estimate_params_on_synthetic(small_sim):
    groups = {}
    for tid, t, lat, lng, _ in small_sim.fixes:
        groups.setdefault(tid, []).append(GpsFix(tid, t, GeoPoint(lat, lng)))
    trajs = [PointTrajectory(k, tuple(v)) for k, v in groups.items()]
    p = estimate_params(trajs, small_sim.net)
    # median |N(0, 5)| along the normal is 5 * 0.6745, times 1.4826 gives back about 5
    assert 3.5 < p.sigma_z < 6.5
    assert p.beta >= 1.0


# --- probabilities and cutoffs --------------------------------------------


@pytest.mark.parametrize("d, positive", [(200.0 - 1e-6, True), (200.0, True), (200.0 + 1e-6, False)])
def test_emission_cutoff_boundary(d, positive):
    params = HmmParams(sigma_z=100.0)
    assert (emission_prob(d, params) > 0) is positive
    assert math.isfinite(float(log_emission(np.array([d]), params)[0])) is positive


@pytest.mark.parametrize("d_t, positive", [(2000.0 - 1e-6, True), (2000.0, True), (2000.0 + 1e-6, False)])
def test_transition_cutoff_boundary(d_t, positive):
    params = HmmParams(beta=1000.0)
    assert (transition_prob(d_t, params) > 0) is positive
    lt = log_transition(np.array([[d_t]]), 0.0, 1000.0, params)
    assert math.isfinite(float(lt[0, 0])) is positive


@pytest.mark.parametrize("route, positive", [(50.0 - 1e-6, True), (50.0, True), (50.0 + 1e-6, False)])
def test_speed_prune_boundary(route, positive):
    # 180 km/h is exactly 50 m/s; dt = 1 s
    params = HmmParams()
    lt = log_transition(np.array([[route]]), route, 1.0, params)
    assert math.isfinite(float(lt[0, 0])) is positive
    assert (transition_prob(0.0, params, implied_speed=route * 3.6) > 0) is positive


def test_emission_is_gaussian():
    params = HmmParams(sigma_z=4.0)
    assert emission_prob(4.0, params) == pytest.approx(math.exp(-0.5) / (math.sqrt(2 * math.pi) * 4.0))
    assert transition_prob(3.0, HmmParams(beta=2.0)) == pytest.approx(math.exp(-1.5) / 2.0)


# --- viterbi ----------------------------------------------------------------


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_viterbi_equals_enumeration(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 6))
    sizes = rng.integers(1, 5, n)
    emis = [np.round(rng.normal(0, 8, s)) / 4 for s in sizes]  # quarter steps: ties are common and exact
    trans = []
    for a, b in zip(sizes, sizes[1:]):
        m = np.round(rng.normal(0, 8, (a, b))) / 4
        m[rng.random((a, b)) < 0.2] = -np.inf
        trans.append(m)
    want, best = exhaustive_decode_loop(emis, trans)
    if not math.isfinite(best):
        return
    path, score = viterbi(emis[0], list(zip(trans, emis[1:])))
    assert path == want
    assert score == pytest.approx(best)
    assert exhaustive_decode(emis, trans)[0] == want


def test_viterbi_tie_takes_smallest_ordinal():
    path, _ = viterbi(np.array([0.0, 0.0]), [(np.zeros((2, 2)), np.zeros(2))])
    assert path == [0, 0]


def test_viterbi_rounding_does_not_break_ties():
    # 0.1 + 0.2 and 0.3 tie in real arithmetic but differ by one ulp in floats
    trans = np.array([[0.1 + 0.2], [0.3]])
    path, _ = viterbi(np.array([-5.0, -5.0]), [(-trans[::-1], np.zeros(1))])
    assert path == [0, 0]
    path, _ = viterbi(np.array([-5.0, -5.0]), [(-trans, np.zeros(1))])
    assert path == [0, 0]
    # a real gap is still respected
    path, _ = viterbi(np.array([-5.0, -5.0 + 1e-6]), [(np.zeros((2, 1)), np.zeros(1))])
    assert path == [1, 0]


def test_match_equals_exhaustive_on_random_instances():
    rng = np.random.default_rng(123)
    checked = 0
    while checked < 40:
        inst = random_instance(rng)
        if inst is None:
            continue
        net, traj, params = inst
        want_ids, want_proj, best = oracle_match(net, traj, params)
        if not math.isfinite(best):
            continue
        got = match(traj, net, params)
        assert len(got) == 1
        assert [p.segment_id for _, p in got[0].matched] == want_ids
        assert [p.offset for _, p in got[0].matched] == [p.offset for p in want_proj]
        checked += 1


# --- matching behavior ------------------------------------------------------


def test_straight_drive_matches_one_segment():
    net = make_network({"a": (0, 0), "b": (300, 0)}, [("a", "b")])
    pts = [(x, 3.0 * (-1) ** k) for k, x in enumerate(range(10, 300, 30))]
    out = match(traj_from(pts), net, HmmParams())
    assert len(out) == 1
    assert to_segment_route(out[0]) == ["r0"]


def test_u_turn_on_two_way_road():
    net = make_network({"a": (0, 0), "b": (400, 0)}, [("a", "b")])
    pts = [(x, 2.0) for x in range(20, 390, 40)] + [(x, -2.0) for x in range(370, 100, -40)]
    out = match(traj_from(pts, dt=4.0), net, HmmParams())
    assert to_segment_route(out[0]) == ["r0", "r1"]


def test_split_when_no_candidates():
    net = make_network({"a": (0, 0), "b": (300, 0)}, [("a", "b")])
    pts = [(20, 0), (50, 0), (80, 0), (90, 5000), (120, 0), (150, 0)]
    out = match(traj_from(pts), net, HmmParams())
    assert [m.traj_id for m in out] == ["t#0", "t#1"]
    assert [len(m.matched) for m in out] == [3, 2]
    assert all(f.traj_id == "t" for m in out for f in m.fixes)


def test_split_when_transition_impossible():
    # two disconnected roads: the jump between them has no route
    net = make_network({"a": (0, 0), "b": (300, 0), "c": (0, 600), "d": (300, 600)}, [("a", "b"), ("c", "d")])
    pts = [(20, 0), (60, 0), (100, 600), (140, 600)]
    out = match(traj_from(pts, dt=30.0), net, HmmParams())
    assert len(out) == 2


def test_empty_trajectory():
    net = make_network({"a": (0, 0), "b": (300, 0)}, [("a", "b")])
    with pytest.raises(EmptyTrajectoryError):
        match(PointTrajectory("x", ()), net, HmmParams())
    with pytest.raises(EmptyTrajectoryError):
        preprocess(PointTrajectory("x", ()), 5.0)


def test_to_segment_route_collapses_runs():
    net = make_network({"a": (0, 0), "b": (200, 0), "c": (400, 0)}, [("a", "b"), ("b", "c")])
    pts = [(20, 0), (80, 0), (150, 0), (230, 0), (300, 0)]
    out = match(traj_from(pts), net, HmmParams())
    assert to_segment_route(out[0]) == ["r0", "r2"]


# --- preprocessing --------------------------------------------------------


def test_preprocess_drops_duplicates_jumps_and_close_points():
    fixes = (GpsFix("t", 0, geo(0, 0)), GpsFix("t", 0, geo(50, 0)),   # duplicate time
             GpsFix("t", 10, geo(60, 0)),
             GpsFix("t", 11, geo(2000, 0)),                           # 500 km/h-class jump
             GpsFix("t", 20, geo(63, 0)),                             # within 2 sigma of last kept
             GpsFix("t", 30, geo(120, 0)))
    out = preprocess(PointTrajectory("t", fixes), sigma_z=5.0)
    assert [f.t for f in out.fixes] == [0, 10, 30]


def test_preprocess_keeps_clean_approach():
    traj = traj_from([(30 * k, 0) for k in range(20)], dt=4.0)
    assert len(preprocess(traj, 5.0)) == 20


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 30), st.floats(-300, 300), st.floats(-300, 300)), min_size=1, max_size=30),
       st.floats(1, 20))
def test_preprocess_idempotent(steps, sigma):
    t = 0.0
    fixes = []
    for dt, x, y in steps:
        t += dt
        fixes.append(GpsFix("t", t, geo(x, y)))
    once = preprocess(PointTrajectory("t", tuple(fixes)), sigma)
    assert preprocess(once, sigma) == once


def test_timestamps_must_not_decrease():
    with pytest.raises(ValueError):
        PointTrajectory("t", (GpsFix("t", 5, geo(0, 0)), GpsFix("t", 4, geo(1, 0))))


# --- I/O -------------------------------------------------------------------


def test_read_trajectories_formats(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("traj_id,timestamp,lat,lng\n"
                 "b,2016-09-01T00:00:10Z,24.48,118.09\n"
                 "a,1472688000,24.48,118.09\n"
                 "b,2016-09-01T00:00:05,24.48,118.091\n")
    trajs = read_trajectories(p)
    assert [t.traj_id for t in trajs] == ["a", "b"]
    assert [f.t for f in trajs[1].fixes] == [1472688005.0, 1472688010.0]


def test_read_trajectories_bad_row(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("traj_id,timestamp,lat,lng\na,0,95,0\n")
    with pytest.raises(ValueError, match="line 2"):
        read_trajectories(p)


def test_matched_round_trip(tmp_path):
    net = make_network({"a": (0, 0), "b": (300, 0)}, [("a", "b")])
    out = match(traj_from([(20, 3), (60, -2), (100, 4)]), net, HmmParams())
    write_matched(out, tmp_path / "m.csv")
    back = read_matched(tmp_path / "m.csv", net)
    assert isinstance(back[0], MatchedTrajectory)
    assert [(f.t, p.segment_id, p.offset) for f, p in back[0].matched] == \
        [(f.t, p.segment_id, p.offset) for f, p in out[0].matched]
    assert [p.distance for _, p in back[0].matched] == pytest.approx([p.distance for _, p in out[0].matched],
                                                                     abs=1e-6)
