"""Random stop-and-go profiles on one long road and the brute-force parking answer."""
from __future__ import annotations

import numpy as np

from conftest import geo, make_network
from oracles import maximal_stop_windows
from violmap.mapmatch import GpsFix, MatchedTrajectory

ROAD = make_network({"a": (0, 0), "b": (20000, 0)}, [("a", "b")], two_way=False)


def random_profile(rng: np.random.Generator, max_points: int = 12, delta: float = 0.8) -> MatchedTrajectory:
    n = int(rng.integers(1, max_points + 1))
    t, off = 0.0, float(rng.uniform(0, 100))
    rows = [(t, off)]
    for _ in range(n - 1):
        dt = float(rng.choice([0.0, 5.0, 30.0, 60.0, 120.0, 240.0], p=[0.05, 0.2, 0.3, 0.2, 0.15, 0.1]))
        kind = rng.random()
        if kind < 0.45:
            step = float(rng.uniform(0, delta * dt))          # slow
        elif kind < 0.55:
            step = delta * dt                                # exactly at the threshold
        elif kind < 0.65:
            step = -float(rng.uniform(0, 30))                 # jitter backwards
        else:
            step = float(rng.uniform(delta * dt, 20 * dt + 1))  # moving
        t += dt
        off = min(max(off + step, 0.0), 19000.0)
        rows.append((t, off))
    matched = []
    for t, off in rows:
        loc = geo(off, 0.0)
        matched.append((GpsFix("p", t, loc), ROAD.project(loc, "r0")))
    return MatchedTrajectory("p", matched)


def oracle_parkings(m: MatchedTrajectory, delta: float, min_duration: float, backward_tol: float):
    """Set of (st, et) from brute-force maximal windows of slow consecutive pairs."""
    ok = []
    for (f1, p1), (f2, p2) in zip(m.matched, m.matched[1:]):
        diff = p2.offset - p1.offset
        if diff < -backward_tol:
            ok.append(False)  # would need to go around; the road is one-way with no loop
            continue
        d = abs(diff)
        dt = f2.t - f1.t
        ok.append(d == 0 if dt == 0 else d / dt < delta)
    out = set()
    for i, j in maximal_stop_windows(ok):
        st, et = m.matched[i][0].t, m.matched[j][0].t
        if et - st >= min_duration:
            out.add((st, et))
    return out
