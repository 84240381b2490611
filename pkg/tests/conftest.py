import math
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from violmap.roadnet import GeoPoint, Intersection, RoadNetwork, RoadSegment, polyline_length  # noqa: E402
from violmap.synth import SynthSpec, build_city, generate  # noqa: E402

LAT0, LNG0 = 24.48, 118.09
M_PER_DEG = 6371000.0 * math.pi / 180.0


def geo(x, y):
    """Local east/north meters around (LAT0, LNG0) to a GeoPoint."""
    return GeoPoint(LAT0 + y / M_PER_DEG, LNG0 + x / (M_PER_DEG * math.cos(math.radians(LAT0))))


def make_network(nodes, edges, two_way=True):
    """Network from {id: (x, y)} meters and [(a, b, name)] straight edges."""
    inters = [Intersection(n, geo(*p)) for n, p in nodes.items()]
    segs = []
    k = 0
    for a, b, *name in edges:
        pairs = [(a, b), (b, a)] if two_way else [(a, b)]
        for u, v in pairs:
            geom = (geo(*nodes[u]), geo(*nodes[v]))
            segs.append(RoadSegment(f"r{k}", u, v, geom, polyline_length(geom), name[0] if name else None))
            k += 1
    return RoadNetwork(inters, segs)


@pytest.fixture(scope="session")
def grid_city():
    return build_city(SynthSpec(seed=7))


@pytest.fixture(scope="session")
def small_sim():
    return generate(SynthSpec(rows=3, cols=3, n_trajectories=60, seed=11, n_turn_signs=4, n_parking_signs=4))


@pytest.fixture
def cross_net():
    """A plus-shaped two-way junction: centre c, arms n, e, s, w at 200 m."""
    nodes = {"c": (0, 0), "n": (0, 200), "e": (200, 0), "s": (0, -200), "w": (-200, 0)}
    edges = [("s", "c", "NS Road"), ("c", "n", "NS Road"), ("w", "c", "EW Road"), ("c", "e", "EW Road")]
    return make_network(nodes, edges)


@pytest.fixture(scope="session")
def small_run(small_sim, tmp_path_factory):
    """The small city written to disk and pushed through every stage once.

    Returns (config, report, synthetic file paths).
    """
    from violmap.pipeline import PipelineConfig, run
    from violmap.synth import write_city

    root = tmp_path_factory.mktemp("small_run")
    paths = write_city(small_sim, root)
    cfg = PipelineConfig(network=str(paths["network"]), trajectories=str(paths["trajectories"]),
                         signs=str(paths["signs"]), limits=str(paths["limits"]), out_dir=str(root / "out"))
    return cfg, run(cfg), paths


ACCEPTANCE = pytest.StashKey[dict]()
CRITERIA = {
    1: "Viterbi equals exhaustive enumeration",
    2: "HMM parameter constants",
    3: "emission, transition and speed cutoffs",
    4: "synthetic matching accuracy",
    5: "turn classification sweep",
    6: "parking windows equal brute force",
    7: "cubic fit residual and gradient",
    8: "threshold value and Chebyshev bound",
    9: "planted hotspot recovery",
    10: "map matching throughput",
    11: "detector client conformance",
}


@pytest.fixture
def verdict(request):
    """Record one acceptance criterion's outcome for the end-of-run summary."""
    results = request.config.stash.setdefault(ACCEPTANCE, {})

    def record(number: int, ok: bool, detail: str) -> None:
        results[number] = (bool(ok), detail)

    return record


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(ACCEPTANCE, None)
    if results is None:
        return
    terminalreporter.section("acceptance criteria")
    for number, title in CRITERIA.items():
        if number in results:
            ok, detail = results[number]
            terminalreporter.write_line(f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}")
        else:
            terminalreporter.write_line(f"criterion {number:2d} FAIL  {title}: no result recorded")
