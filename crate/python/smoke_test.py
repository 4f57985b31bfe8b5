"""Smoke test for the `ldd` extension module.

Build and run from the repository root:

    cargo build --release -p ldd-python --features extension-module
    cp target/release/libldd.so python/ldd.so
    python3 python/smoke_test.py
"""

import math
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import ldd  # noqa: E402

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def scenario(name):
    return os.path.join(ROOT, "scenarios", name)


def main():
    c = ldd.RegularityConstants(1.0, 1.0, 1.0, 0.5, 1.0)
    report = ldd.check_admissibility([c, c], [[2.0, 2.0], [2.0, 2.0]], 0.1, 1.0)
    assert abs(report["layers"][0]["C"] - 0.3) < 1e-15, report
    assert report["tau_max"] == 0.25
    assert ldd.max_stable_tau([c, c], [[2.0, 2.0], [2.0, 2.0]], 1.0) == 0.25
    print("admissibility example: C = %.3f, tau_max = %.3f" % (report["layers"][0]["C"], report["tau_max"]))

    check = ldd.Scenario.load(scenario("check_example.ini")).check()
    assert check["passed"] and check["tau_max"] == 0.25

    sc = ldd.Scenario.load(scenario("constant.ini"))
    traj = sc.run()
    assert traj.completed and len(traj) == sc.steps + 1
    f = traj.fields(sc.steps)
    assert all(v == 1.0 for v in f["p_w"]) and all(v == 1.5 for v in f["p_g"])
    print("constant scenario: %d levels, iterations %s" % (len(traj), traj.iterations))

    text = open(scenario("two_layer_bump.ini")).read()
    for a, b in [("nx = 16", "nx = 8"), ("ny = 8", "ny = 4"), ("split_index = 8", "split_index = 4")]:
        text = text.replace(a, b)
    traj = ldd.Scenario.parse(text).run(monitor=True)
    assert traj.completed, traj.failure
    assert all(0.0 < r < 1.0 for r in traj.contraction_factors)
    print("bump scenario: iterations %s, contraction %s" % (traj.iterations, ["%.4f" % r for r in traj.contraction_factors]))

    v = ldd.verify("constant", [4, 8])
    assert v["passed"] and max(v["l2_w"]) <= 1e-10
    v = ldd.verify("constant", [4], break_source=True)
    assert not v["passed"]

    try:
        ldd.Scenario.parse("[geometry]\nnx = 0\n")
    except ldd.ConfigError as e:
        print("config error surfaced:", e)
    else:
        raise AssertionError("expected ConfigError")

    assert "quadratic-in-x transient" in ldd.catalog()
    assert not math.isnan(report["layers"][1]["growth"])
    print("smoke test passed")


if __name__ == "__main__":
    main()
