"""Pairwise time-offset estimation and anchor-to-anchor ranging.

Two full-duplex anchors that decode each other's beacons each measure a
purely local interval: the time between hearing their own beacon and
hearing the peer's. Those two intervals determine both the emission-time
offset of the beacons and the inter-anchor distance without any clock
synchronization, because every interval is taken on a single clock.

Sign conventions are fully symmetric: for a pair (A, B) the offset is B's
emission time minus A's, negative when B transmitted first, and swapping
the roles negates the offset while leaving the distance unchanged.
"""

import math
from collections.abc import Mapping
from dataclasses import dataclass

from .model import SelectedBeacon, SolverParams, TestbedConfig, distance


@dataclass(frozen=True)
class PairIntervals:
    """The two locally measured intervals for a pair of beacons.

    ``interval_a`` is measured at anchor A: arrival of B's beacon minus
    arrival of A's own beacon. ``interval_b`` is measured at anchor B:
    arrival of B's own beacon minus arrival of A's beacon. ``sep_a`` and
    ``sep_b`` are the speaker-to-own-mic distances of the two anchors.
    """

    anchor_a: int
    anchor_b: int
    interval_a: float
    interval_b: float
    sep_a: float = 0.0
    sep_b: float = 0.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.interval_a) and math.isfinite(self.interval_b)):
            raise ValueError("intervals must be finite")
        if self.sep_a < 0 or self.sep_b < 0:
            raise ValueError("mic/speaker separations must be >= 0")


@dataclass(frozen=True)
class OffsetSet:
    """Validated per-window emission-time offsets relative to one reference.

    ``offsets[k]`` is anchor k's beacon emission time minus the reference
    anchor's, in a common timescale; the reference maps to exactly 0.
    """

    reference_id: int
    offsets: Mapping[int, float]
    valid_anchor_ids: frozenset[int]
    avg_ranging_error: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "offsets", dict(self.offsets))
        object.__setattr__(self, "valid_anchor_ids", frozenset(self.valid_anchor_ids))
        if self.reference_id not in self.valid_anchor_ids:
            raise ValueError("reference anchor must be in the valid set")
        if self.offsets.get(self.reference_id) != 0.0:
            raise ValueError("reference anchor must have offset 0")
        if set(self.offsets) != set(self.valid_anchor_ids):
            raise ValueError("offsets must cover exactly the valid anchors")


def estimate_time_offset(pair: PairIntervals, speed_of_sound: float) -> float:
    """Emission-time offset of B's beacon relative to A's, in seconds.

    Mean of the two locally measured intervals plus a correction for the
    two anchors' own speaker-to-mic separations; the symmetric cross
    distances cancel. Signed: negative when B transmitted before A.
    """
    if speed_of_sound <= 0:
        raise ValueError("speed of sound must be positive")
    return (pair.interval_a + pair.interval_b) / 2.0 + (pair.sep_a - pair.sep_b) / (
        2.0 * speed_of_sound
    )


def estimate_anchor_distance(pair: PairIntervals, speed_of_sound: float) -> float:
    """Distance between the two anchors, in meters.

    Half the speed of sound times the interval difference, plus the mean
    of the two speaker-to-mic separations. Exact when the two cross
    distances are equal; a timestamp error on either cross reception
    shifts the estimate by half the speed of sound times the error.
    """
    if speed_of_sound <= 0:
        raise ValueError("speed of sound must be positive")
    return 0.5 * speed_of_sound * (pair.interval_a - pair.interval_b) + 0.5 * (
        pair.sep_a + pair.sep_b
    )


def pair_intervals(
    beacon_a: SelectedBeacon,
    beacon_b: SelectedBeacon,
    sep_a: float = 0.0,
    sep_b: float = 0.0,
) -> PairIntervals | None:
    """Build the interval pair for two selected beacons.

    Returns None when either cross reception is missing (one anchor never
    decoded the other's beacon), in which case the pair cannot be ranged.
    """
    a, b = beacon_a.source_id, beacon_b.source_id
    own_a = beacon_a.anchor_timestamps[a]
    own_b = beacon_b.anchor_timestamps[b]
    b_at_a = beacon_b.anchor_timestamps.get(a)
    a_at_b = beacon_a.anchor_timestamps.get(b)
    if b_at_a is None or a_at_b is None:
        return None
    return PairIntervals(
        anchor_a=a,
        anchor_b=b,
        interval_a=b_at_a - own_a,
        interval_b=own_b - a_at_b,
        sep_a=sep_a,
        sep_b=sep_b,
    )


def _true_distance(
    config: TestbedConfig,
    true_distances: Mapping[tuple[int, int], float] | None,
    i: int,
    j: int,
) -> float:
    if true_distances is not None:
        d = true_distances.get((i, j))
        if d is None:
            d = true_distances.get((j, i))
        if d is None:
            raise ValueError(f"no ground-truth distance for anchor pair ({i}, {j})")
        return d
    return distance(config.anchor_position(i), config.anchor_position(j))


def _pair_table(
    selection: Mapping[int, SelectedBeacon],
    config: TestbedConfig,
    true_distances: Mapping[tuple[int, int], float] | None,
) -> dict[tuple[int, int], tuple[float, float]]:
    """(i, j) -> (ranging error, offset estimate) for computable pairs."""
    ids = sorted(selection)
    c = config.speed_of_sound
    table: dict[tuple[int, int], tuple[float, float]] = {}
    for i in ids:
        sep_i = config.anchor(i).mic_speaker_sep
        for j in ids:
            if j == i:
                continue
            intervals = pair_intervals(
                selection[i], selection[j], sep_i, config.anchor(j).mic_speaker_sep
            )
            if intervals is None:
                continue
            err = abs(
                estimate_anchor_distance(intervals, c)
                - _true_distance(config, true_distances, i, j)
            )
            table[(i, j)] = (err, estimate_time_offset(intervals, c))
    return table


def pairwise_ranging_errors(
    selection: Mapping[int, SelectedBeacon],
    config: TestbedConfig,
    true_distances: Mapping[tuple[int, int], float] | None = None,
) -> dict[tuple[int, int], float]:
    """Ordered-pair ranging errors |estimated - known| in meters.

    Pairs missing a cross reception are absent from the result.
    """
    return {
        pair: err for pair, (err, _) in _pair_table(selection, config, true_distances).items()
    }


def detect_outlier_offsets(
    selection: Mapping[int, SelectedBeacon],
    config: TestbedConfig,
    params: SolverParams,
    true_distances: Mapping[tuple[int, int], float] | None = None,
) -> OffsetSet | None:
    """Choose the reference anchor whose offset estimates look most trustworthy.

    For every candidate reference the pairwise anchor distances are
    re-estimated from beacon timestamps and compared against the known
    anchor geometry; peer pairs whose ranging error exceeds
    ``params.ranging_err_thr`` (or that are not computable) are discarded.
    References that keep at least ``params.num_anchors_req`` anchors,
    themselves included, compete on the smallest average ranging error,
    with ties falling to the lowest anchor id. Returns None when no
    reference qualifies.

    ``true_distances`` defaults to point-to-point distances between the
    configured anchor positions.
    """
    table = _pair_table(selection, config, true_distances)
    best: tuple[float, int, dict[int, tuple[float, float]]] | None = None
    for ref in sorted(selection):
        valid = {j: table[(ref, j)] for j in sorted(selection) if (ref, j) in table
                 and table[(ref, j)][0] <= params.ranging_err_thr}
        if len(valid) + 1 < params.num_anchors_req:
            continue
        avg_err = sum(err for err, _ in valid.values()) / len(valid)
        if best is None or avg_err < best[0]:
            best = (avg_err, ref, valid)
    if best is None:
        return None
    avg_err, ref, valid = best
    offsets = {ref: 0.0}
    offsets.update({j: off for j, (_, off) in sorted(valid.items())})
    return OffsetSet(
        reference_id=ref,
        offsets=offsets,
        valid_anchor_ids=frozenset(offsets),
        avg_ranging_error=avg_err,
    )
