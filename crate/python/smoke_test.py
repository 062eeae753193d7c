"""Smoke test for the qtube Python extension.

Build and import with:
    cargo build --release -p qtube-py
    cp target/release/libqtube.so python/qtube.so
    python3 python/smoke_test.py
"""

import json
import math
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import qtube  # noqa: E402


def main():
    grid = qtube.Grid(-40.0, 40.0, 2048)
    psi = qtube.WaveFunction.gaussian(qtube.Packet(0.0, 0.0, 1.0), grid)
    assert abs(psi.norm() - 1.0) < 1e-12

    free = qtube.Potential.free()
    assert abs(psi.energy(free) - 0.125) < 1e-9

    evo = qtube.Evolution(psi, free, 1e-3, 2000, 10)
    norm_drift, energy_drift = evo.drift()
    assert norm_drift < 1e-10 and energy_drift < 1e-8

    starts = [-1.0, 0.5, 2.0]
    paths = evo.trajectories(starts)
    t_final = evo.times()[-1]
    spread = math.sqrt(1.0 + (t_final / 2.0) ** 2)
    for x0, path in zip(starts, paths):
        assert abs(path[-1] - x0 * spread) < 1e-3, (x0, path[-1])

    tube = evo.tube(-1.0, 1.0)
    assert max(tube) - min(tube) < 1e-3

    lo, hi = qtube.fraunhofer_boundary(0, 20.0, 5, 2.0)
    assert lo < 0.0 < hi

    packets = [qtube.Packet(-10.0, 5.0, 1.0), qtube.Packet(10.0, -5.0, 1.0, 0.5j)]
    pair = qtube.WaveFunction.superpose(packets, grid)
    assert abs(pair.norm() - 1.0) < 1e-12

    config = """
[grid]
x_min = -30.0
x_max = 30.0
n_points = 1024
[potential]
kind = "tanh_barrier"
v0 = 10.0
alpha = 5.0
x_minus = -1.0
x_plus = 1.0
[[packets]]
x0 = -8.0
p0 = 4.0
sigma0 = 1.0
[propagation]
dt = 1e-3
n_steps = 3000
snapshot_stride = 20
[trajectories]
count = 40
[[domains]]
label = "R"
a = -inf
b = -1.0
[[domains]]
label = "T"
a = 1.0
b = inf
"""
    report = json.loads(qtube.run("custom", config))
    finals = [d["values"][-1] for d in report["domains"]]
    assert all(0.0 <= p <= 1.0 for p in finals)

    try:
        qtube.Grid(0.0, 1.0, 1000)
    except ValueError:
        pass
    else:
        raise AssertionError("non power-of-two grid accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
