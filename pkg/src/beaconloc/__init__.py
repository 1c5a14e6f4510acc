"""TDoA positioning from asynchronous acoustic beacons.

Pipeline: full-duplex anchors timestamp each other's beacons, pairwise
intervals yield emission-time offsets and anchor ranges, bad offsets are
screened against the known anchor geometry, and the target position is
solved from distance-difference pairs by a bounded Gauss-Newton fit with
optional iterative removal of outlier anchors.
"""

from .model import (
    DEFAULT_SPEED_OF_SOUND,
    AnchorConfig,
    BeaconObservation,
    LocationFix,
    ObservationWindow,
    SelectedBeacon,
    SolverParams,
    TestbedConfig,
    distance,
    select_per_anchor,
    window_observations,
)
from .ranging import (
    OffsetSet,
    PairIntervals,
    detect_outlier_offsets,
    estimate_anchor_distance,
    estimate_time_offset,
    pair_intervals,
    pairwise_ranging_errors,
)
from .sim import (
    GroundTruth,
    NoiseModel,
    ScheduleConfig,
    SimScenario,
    generate_schedule,
    simulate,
    true_tdoa,
)
from .trilateration import (
    VARIANT_NAMES,
    SolveDiagnostics,
    TdoaPair,
    compute_tdoa,
    count_bad_pairs,
    iterative_outlier_removal,
    locate,
    permute_tdoas,
    prepare_pairs,
    select_pairs,
    solve_position,
    variant_params,
)

__version__ = "0.1.0"

__all__ = [
    "AnchorConfig",
    "BeaconObservation",
    "DEFAULT_SPEED_OF_SOUND",
    "GroundTruth",
    "LocationFix",
    "NoiseModel",
    "ObservationWindow",
    "OffsetSet",
    "PairIntervals",
    "ScheduleConfig",
    "SelectedBeacon",
    "SimScenario",
    "SolveDiagnostics",
    "SolverParams",
    "TdoaPair",
    "TestbedConfig",
    "VARIANT_NAMES",
    "compute_tdoa",
    "count_bad_pairs",
    "detect_outlier_offsets",
    "distance",
    "estimate_anchor_distance",
    "estimate_time_offset",
    "generate_schedule",
    "iterative_outlier_removal",
    "locate",
    "pair_intervals",
    "pairwise_ranging_errors",
    "permute_tdoas",
    "prepare_pairs",
    "select_pairs",
    "select_per_anchor",
    "simulate",
    "solve_position",
    "true_tdoa",
    "variant_params",
    "window_observations",
]
