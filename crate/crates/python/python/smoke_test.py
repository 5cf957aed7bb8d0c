"""Smoke test for the servosim Python module.

Build and install first, e.g. ``maturin develop --release`` or
``pip install crates/python``, then run ``python smoke_test.py``.
"""

import math
import sys

import servosim_py as ss


def check(cond, what):
    if not cond:
        print(f"FAIL {what}")
        sys.exit(1)
    print(f"ok   {what}")


def main():
    m1 = ss.FrictionParams("M1", k_v=0.1, k_c=0.2)
    check(m1.model == "M1" and m1.vector() == [0.1, 0.2], "construct M1")
    check(abs(m1.budget(0.0, 0.0, 2.0) - 0.4) < 1e-12, "M1 budget at 2 rad/s")

    m4 = ss.FrictionParams.from_json(
        '{"model": "M4", "k_v": 0.12, "k_c": 0.08, "k_l": 0.1, "k_cs": 0.1,'
        ' "k_ls": 0.15, "v_s": 0.3, "alpha": 1.2}'
    )
    check(ss.FrictionParams.from_json(m4.to_json()) == m4, "json round trip")
    kc, kv = ss.equivalent_cv(m4, 0.5, -0.2, 0.7)
    check(abs(kc + kv * 0.7 - m4.budget(0.5, -0.2, 0.7)) < 1e-15, "equivalent CV identity")

    stop = ss.stop_torque(0.01, 0.001, 0.0, 0.3, 0.0)
    check(ss.applied_friction(stop, 0.5) == stop, "stop torque inside budget is applied")

    drive, back = ss.static_boundary(m1, 0.5)
    check(abs(drive - (-0.5 + 0.2)) < 1e-9 and abs(back - (-0.5 - 0.2)) < 1e-9, "M1 static boundary")
    rows = ss.diagram(m1, [-1.0, 0.0, 1.0], [0.0, 1.0])
    check(len(rows) == 6, "diagram rows")

    logs = ss.synthesize("erob", types=["lift-drop"], noise=0.0, seed=1, duration=3.0)
    check(len(logs) == 20, "synthesize erob lift-drop")
    log = logs[0]
    again = ss.TrajectoryLog.from_json(log.to_json())
    check(again.measured() == log.measured() and again.targets() == log.targets(), "log round trip")
    sim = ss.simulate(log, log.ground_truth)
    check(max(abs(a - b) for a, b in zip(sim, log.measured())) == 0.0, "replay at ground truth")
    check(ss.evaluate(log.ground_truth, logs) == 0.0, "zero cost at ground truth")

    ident_ids, val_ids = ss.split(logs, 7)
    check(len(ident_ids) == 15 and len(val_ids) == 5, "75/25 split")

    small = ss.synthesize("dynamixel", types=["accelerated-oscillations"], noise=0.0, seed=0, duration=2.0,
                          truth=ss.FrictionParams("M1", k_v=0.1, k_c=0.05))
    fit = ss.identify(small[:8], "M1", budget=300, seed=0, validation=small[8:12])
    check(fit.model == "M1" and math.isfinite(fit.validation_mae), "identify M1")
    check(fit.trace == sorted(fit.trace, reverse=True), "trace is non-increasing")
    print("all checks passed")


if __name__ == "__main__":
    main()
