"""Plant three violation hotspots in a small grid city and find them again.

Run with ``python3 demos/hotspots_in_a_synthetic_city.py [seed]``. The script
writes the city and every pipeline artifact under ``demo_out/`` and prints the
prone locations next to the planted ones.
"""
import sys
from pathlib import Path

from violmap import pipeline as pl
from violmap.synth import SynthSpec, generate, write_city

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
root = Path("demo_out") / f"city{seed}"

# A 4x4 grid with 200 m blocks; one intersection, one curb segment and one road
# see ten times the violation rate of their peers.
city = generate(SynthSpec(seed=seed, n_trajectories=600))
paths = write_city(city, root)
print(f"{len(city.fixes)} GPS fixes from {len(city.trip_kinds)} trips, "
      f"{len(city.truth)} planted violations")
print("planted:", city.hotspots)

cfg = pl.PipelineConfig(network=str(paths["network"]), trajectories=str(paths["trajectories"]),
                        signs=str(paths["signs"]), limits=str(paths["limits"]), out_dir=str(root / "out"))
report = pl.run(cfg)
match = report.stages["match"]
print(f"matched {match['matched_points']} of {match['raw_points']} fixes at "
      f"{match['points_per_second']:.0f} points/s (sigma_z {match['sigma_z']:.2f} m, beta {match['beta']:.2f} m)")

# Intersection ids in the output are cluster ids; show their coordinates so the
# turn hotspot can be compared with the planted node.
where = {i.id: i.location for i in pl.read_intersections(cfg.path("intersections"))}
planted_node = city.net.intersection(city.hotspots["illegal_turn"]).location
print(f"planted turn hotspot at ({planted_node.lat:.6f}, {planted_node.lng:.6f})")
for p in pl.read_prone(cfg.path("prone")):
    hours = ", ".join(f"{h:02d}h ({v:.2f} > {th:.2f})" for h, v, th in p.hours)
    extra = ""
    if p.location_ref in where:
        loc = where[p.location_ref]
        extra = f" at ({loc.lat:.6f}, {loc.lng:.6f})"
    print(f"prone {p.kind.value:16s} {p.location_ref}{extra}: {hours}")
print(f"GeoJSON map: {cfg.path('geojson')}")
