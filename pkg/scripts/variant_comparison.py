#!/usr/bin/env python3
"""Compare the four pipeline variants on one simulated dataset.

Identical windows feed every variant (shared seed), so the differences in
the table are attributable to pairing mode and outlier removal alone.
"""

import argparse

from beaconloc import (
    AnchorConfig,
    NoiseModel,
    ScheduleConfig,
    SimScenario,
    TestbedConfig,
    VARIANT_NAMES,
    simulate,
    variant_params,
)
from beaconloc.evaluate import compute_error_summary, compute_fixes

TARGETS = (
    ("p1", (3.2, 2.4)),
    ("p2", (7.1, 5.0)),
    ("p3", (4.5, 5.5)),
    ("p4", (6.0, 2.5)),
    ("p5", (2.8, 4.9)),
    ("p6", (8.2, 3.1)),
)


def office_testbed() -> TestbedConfig:
    anchors = [
        AnchorConfig(1, (0.3, 0.3)),
        AnchorConfig(2, (5.3, 0.3)),
        AnchorConfig(3, (10.3, 0.3)),
        AnchorConfig(4, (10.3, 3.9)),
        AnchorConfig(5, (10.3, 7.4)),
        AnchorConfig(6, (5.3, 7.4)),
        AnchorConfig(7, (0.3, 7.4)),
        AnchorConfig(8, (0.3, 3.9)),
    ]
    return TestbedConfig(anchors, (0.0, 0.0), (10.67, 7.76))


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--windows", type=int, default=40, help="windows per target")
    parser.add_argument("--jitter-us", type=float, default=50.0)
    parser.add_argument("--nlos-ms", type=float, default=3.0,
                        help="extra delay on the anchor-3 target links")
    args = parser.parse_args()

    testbed = office_testbed()
    noise = NoiseModel(
        jitter_sigma=args.jitter_us * 1e-6,
        nlos_bias={(3, label): args.nlos_ms * 1e-3 for label, _ in TARGETS},
    )
    scenario = SimScenario(
        testbed=testbed,
        targets=TARGETS,
        schedule=ScheduleConfig(cycle_slots=9),
        noise=noise,
        seed=args.seed,
        duration=args.windows * 18.0 + 2.0,
    )
    observations, truth = simulate(scenario)
    truth_positions = dict(truth.target_positions)

    print(f"{'variant':>14} {'fixes':>6} {'mean_m':>9} {'q95_m':>9}")
    for name in VARIANT_NAMES:
        fixes = compute_fixes(observations, testbed, variant_params(name), 18.0)
        summary = compute_error_summary(fixes, truth_positions)
        print(f"{name:>14} {len(fixes):>6} {summary.mean:>9.4f} {summary.q95:>9.4f}")


if __name__ == "__main__":
    main()
