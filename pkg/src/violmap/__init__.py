"""Traffic violation-prone location mining from vehicle GPS trajectories."""
