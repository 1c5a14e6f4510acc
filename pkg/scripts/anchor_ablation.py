#!/usr/bin/env python3
"""Localization error versus number of anchors, on shared windows."""

import argparse

from beaconloc import NoiseModel, ScheduleConfig, SimScenario, simulate, variant_params
from beaconloc.evaluate import render_ablation, run_ablation
from variant_comparison import TARGETS, office_testbed


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=13)
    parser.add_argument("--windows", type=int, default=40, help="windows per target")
    parser.add_argument("--jitter-us", type=float, default=50.0)
    args = parser.parse_args()

    testbed = office_testbed()
    scenario = SimScenario(
        testbed=testbed,
        targets=TARGETS,
        schedule=ScheduleConfig(cycle_slots=9),
        noise=NoiseModel(jitter_sigma=args.jitter_us * 1e-6),
        seed=args.seed,
        duration=args.windows * 18.0 + 2.0,
    )
    observations, truth = simulate(scenario)
    results = run_ablation(
        observations, testbed, variant_params("all-robust"), dict(truth.target_positions)
    )
    print(render_ablation(results), end="")


if __name__ == "__main__":
    main()
