"""Smoke test for the shadowlp extension module.

Build and run from the repository root:

    cargo build --release -p shadowlp-py
    cp target/release/libshadowlp.so python/shadowlp.so
    python3 python/smoke_test.py
"""

import json
import math
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import shadowlp  # noqa: E402


def unit_box(c):
    d = len(c)
    rows, rhs = [], []
    for i in range(d):
        for s in (1.0, -1.0):
            r = [0.0] * d
            r[i] = s
            rows.append(r)
            rhs.append(1.0)
    return shadowlp.LpInstance(rows, rhs, c)


def main():
    box = unit_box([1.0, 2.0, 3.0])
    res = shadowlp.solve(box, seed=1)
    assert res.status == "optimal", res
    assert abs(res.value - 6.0) < 1e-9
    assert res.pivots == res.pivots_phase1 + res.pivots_phase2 + res.pivots_phase3
    status, value, _, basis = shadowlp.oracle_optimum(box)
    assert status == "optimal" and abs(value - res.value) < 1e-9 and basis == [0, 2, 4]

    text = "4 3\n1 0 0 -1\n-1 0 0 -1\n0 1 0 1\n0 0 1 1\n1 1 1\n"
    infeasible = shadowlp.LpInstance.parse(text)
    res = shadowlp.solve(infeasible)
    assert res.status == "infeasible" and min(res.certificate) >= 0.0
    assert shadowlp.LpInstance.parse(infeasible.to_text()).b == infeasible.b

    try:
        shadowlp.LpInstance.parse("2 3\n1 0 0\n")
    except ValueError as e:
        assert "line" in str(e)
    else:
        raise AssertionError("malformed input accepted")

    rng = shadowlp.Rng(7)
    z = rng.exp_ball(3)
    q = rng.random_rotation(3)
    assert len(z) == 3 and abs(sum(v * v for v in q[0]) - 1.0) < 1e-12
    abar = [[x / math.sqrt(2) for x in rng.uniform_sphere(3)] for _ in range(20)]
    abar += [r for r in unit_box([0.0, 0.0, 1.0]).a]
    abar = [[x * 0.7 for x in r] for r in abar]
    bbar = [0.7 / math.sqrt(2)] * 20 + [0.7] * 6
    inst = rng.smoothed_instance(abar, bbar, [0.0, 0.0, 1.0], 0.05)
    res = shadowlp.solve(inst, seed=3)
    assert res.status == shadowlp.oracle_optimum(inst)[0] == "optimal"

    c, c2 = [1.0, 0.2, 0.1], [-0.3, 1.0, 0.4]
    _, _, _, start = shadowlp.oracle_optimum(inst, c)
    path, finished = shadowlp.shadow_path(inst, c, c2, start)
    assert finished and path == shadowlp.shadow_arc(inst, c, c2)

    assert shadowlp.count_triples([True, True, True, False])[3]
    square = [[1.0, 1.0], [-1.0, 1.0], [-1.0, -1.0], [1.0, -1.0]]
    assert abs(sum(shadowlp.exterior_angles(square)) - 2 * math.pi) < 1e-12
    assert shadowlp.boundary_integral(square, 1.4, 0.5) <= shadowlp.donut_bound(1.4, 0.5)

    ident = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
    cone = shadowlp.segment_cone_trial(rng, ident, [1.0, -2.0, 0.5], [-1.0, 2.0, 0.5], 0.01, 20000)
    assert cone["passes"], cone

    csv, summary = shadowlp.run_experiment("name = py\nd = 3\nn = 12\nsigmas = 0.1\ntrials = 3\n")
    assert len(csv.strip().splitlines()) == 4
    assert json.loads(summary)["schema_version"] == shadowlp.CSV_SCHEMA_VERSION

    print("shadowlp smoke test passed")


if __name__ == "__main__":
    main()
