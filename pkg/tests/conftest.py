"""Shared scenario builders for the test suite."""

from beaconloc import (
    AnchorConfig,
    NoiseModel,
    ScheduleConfig,
    SimScenario,
    TestbedConfig,
)

# office-sized room: odd ids in the corners, even ids at edge midpoints,
# so the {2,4,6,8} ablation subset still surrounds the floor
OFFICE_BOUNDS = ((0.0, 0.0), (10.67, 7.76))
OFFICE_ANCHORS = (
    (1, (0.3, 0.3)),
    (2, (5.3, 0.3)),
    (3, (10.3, 0.3)),
    (4, (10.3, 3.9)),
    (5, (10.3, 7.4)),
    (6, (5.3, 7.4)),
    (7, (0.3, 7.4)),
    (8, (0.3, 3.9)),
)

# interior test points, all inside the anchor hull
SIX_TARGETS = (
    ("p1", (3.2, 2.4)),
    ("p2", (7.1, 5.0)),
    ("p3", (1.5, 6.1)),
    ("p4", (9.0, 1.2)),
    ("p5", (5.33, 3.88)),
    ("p6", (2.8, 4.9)),
)

# central test points, away from every anchor (outlier-recovery scenarios)
CENTRAL_TARGETS = (
    ("p1", (3.2, 2.4)),
    ("p2", (7.1, 5.0)),
    ("p3", (4.5, 5.5)),
    ("p4", (6.0, 2.5)),
)


def office_testbed(sep: float = 0.0) -> TestbedConfig:
    anchors = [AnchorConfig(i, pos, sep) for i, pos in OFFICE_ANCHORS]
    return TestbedConfig(anchors, OFFICE_BOUNDS[0], OFFICE_BOUNDS[1])


def office_scenario(
    targets=SIX_TARGETS,
    windows: float = 3,
    seed: int = 1,
    noise: NoiseModel | None = None,
    sep: float = 0.0,
) -> SimScenario:
    """Office testbed on the 9-slot TDMA frame; 18 s of beacons per window."""
    return SimScenario(
        testbed=office_testbed(sep),
        targets=tuple(targets),
        schedule=ScheduleConfig(slot_length=1.0, beacon_duration=0.44, cycle_slots=9),
        noise=noise if noise is not None else NoiseModel(),
        seed=seed,
        duration=windows * 18.0 + 2.0,
    )


def target_stream(observations, label):
    """One target's stream: its own observations plus all anchor records."""
    return [
        o
        for o in observations
        if o.receiver_kind == "anchor"
        or (o.receiver_kind == "target" and o.receiver_id == label)
    ]
