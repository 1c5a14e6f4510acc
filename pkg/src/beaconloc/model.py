"""Domain types, geometry, and observation windowing.

Anchors are fixed full-duplex nodes that both emit and decode acoustic
beacons; targets are passive listeners whose positions get solved for.
Everything here is an immutable value or a pure function, so concurrent
use needs no locking.
"""

import math
from collections.abc import Iterable, Mapping
from dataclasses import dataclass
from typing import Literal

import numpy as np

DEFAULT_SPEED_OF_SOUND = 343.0  # m/s in air at roughly 20 C

ReceiverKind = Literal["anchor", "target"]


def distance(p: Iterable[float], q: Iterable[float]) -> float:
    """Euclidean distance between two points of equal dimension."""
    pa = np.asarray(p, dtype=float)
    qa = np.asarray(q, dtype=float)
    if pa.shape != qa.shape:
        raise ValueError(f"dimension mismatch: {pa.shape} vs {qa.shape}")
    return float(np.linalg.norm(pa - qa))


@dataclass(frozen=True)
class AnchorConfig:
    """One fixed beacon node with a co-located speaker/microphone pair.

    ``mic_speaker_sep`` is the physical speaker-to-own-microphone distance;
    it enters the ranging formulas and the self-reception delay in the
    simulator. Cross-links treat the anchor as a point at ``position``.
    """

    anchor_id: int
    position: tuple[float, ...]
    mic_speaker_sep: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))
        if self.anchor_id < 0:
            raise ValueError("anchor id must be a non-negative integer")
        if len(self.position) not in (2, 3):
            raise ValueError(f"anchor {self.anchor_id}: position must be 2D or 3D")
        if not all(math.isfinite(v) for v in self.position):
            raise ValueError(f"anchor {self.anchor_id}: position must be finite")
        if not (math.isfinite(self.mic_speaker_sep) and self.mic_speaker_sep >= 0.0):
            raise ValueError(f"anchor {self.anchor_id}: mic/speaker separation must be >= 0")


@dataclass(frozen=True)
class TestbedConfig:
    """Anchor deployment, feasibility box, and propagation constant.

    ``dimension`` selects 2D or 3D solving. In 2D mode any z coordinate an
    anchor carries is ignored everywhere (propagation, ranging, solving).
    """

    anchors: tuple[AnchorConfig, ...]
    bounds_min: tuple[float, ...]
    bounds_max: tuple[float, ...]
    speed_of_sound: float = DEFAULT_SPEED_OF_SOUND
    dimension: int = 2

    def __post_init__(self) -> None:
        object.__setattr__(self, "anchors", tuple(self.anchors))
        object.__setattr__(self, "bounds_min", tuple(float(v) for v in self.bounds_min))
        object.__setattr__(self, "bounds_max", tuple(float(v) for v in self.bounds_max))
        if self.dimension not in (2, 3):
            raise ValueError("dimension must be 2 or 3")
        if len(self.bounds_min) != self.dimension or len(self.bounds_max) != self.dimension:
            raise ValueError("bounds must match the testbed dimension")
        if any(lo >= hi for lo, hi in zip(self.bounds_min, self.bounds_max)):
            raise ValueError("bounds_min must be strictly below bounds_max on every axis")
        if not (math.isfinite(self.speed_of_sound) and self.speed_of_sound > 0.0):
            raise ValueError("speed of sound must be positive")
        ids = [a.anchor_id for a in self.anchors]
        if len(set(ids)) != len(ids):
            raise ValueError("anchor ids must be unique")
        if len(self.anchors) < self.num_anchors_required:
            raise ValueError(
                f"need at least {self.num_anchors_required} anchors for {self.dimension}D"
            )
        for a in self.anchors:
            if len(a.position) < self.dimension:
                raise ValueError(f"anchor {a.anchor_id}: position has too few coordinates")
            if not self.contains(a.position[: self.dimension]):
                raise ValueError(f"anchor {a.anchor_id}: position outside bounds")

    @property
    def num_anchors_required(self) -> int:
        """Minimum anchors for a fix: 3 in 2D, 4 in 3D."""
        return 3 if self.dimension == 2 else 4

    def anchor(self, anchor_id: int) -> AnchorConfig:
        for a in self.anchors:
            if a.anchor_id == anchor_id:
                return a
        raise KeyError(f"no anchor with id {anchor_id}")

    def anchor_position(self, anchor_id: int) -> np.ndarray:
        """Anchor position trimmed to the testbed dimension."""
        return np.asarray(self.anchor(anchor_id).position[: self.dimension], dtype=float)

    def anchor_positions(self) -> dict[int, np.ndarray]:
        return {a.anchor_id: self.anchor_position(a.anchor_id) for a in self.anchors}

    def contains(self, point: Iterable[float]) -> bool:
        p = np.asarray(point, dtype=float)
        return bool(
            np.all(p >= np.asarray(self.bounds_min)) and np.all(p <= np.asarray(self.bounds_max))
        )

    def clip(self, point: Iterable[float]) -> np.ndarray:
        return np.clip(
            np.asarray(point, dtype=float),
            np.asarray(self.bounds_min),
            np.asarray(self.bounds_max),
        )


@dataclass(frozen=True)
class BeaconObservation:
    """One decoded beacon: who heard it, whose beacon, which one, when.

    ``timestamp`` is seconds on the receiver's own clock; clocks of
    different nodes are unrelated.
    """

    receiver_id: int | str
    receiver_kind: ReceiverKind
    source_id: int
    seqno: int
    timestamp: float

    def __post_init__(self) -> None:
        if self.receiver_kind not in ("anchor", "target"):
            raise ValueError(f"receiver_kind must be 'anchor' or 'target', got {self.receiver_kind!r}")
        if self.receiver_kind == "anchor" and not isinstance(self.receiver_id, int):
            raise ValueError("anchor receivers are identified by integer id")
        if self.source_id < 0 or self.seqno < 0:
            raise ValueError("source id and seqno must be non-negative")
        if not math.isfinite(self.timestamp):
            raise ValueError("timestamp must be finite")


def _observation_sort_key(o: BeaconObservation) -> tuple:
    return (o.timestamp, o.receiver_kind, str(o.receiver_id), o.source_id, o.seqno)


@dataclass(frozen=True)
class ObservationWindow:
    """One tumbling slice of a target's timeline plus joined anchor records.

    Target-side timestamps all fall in [start, start + length). Anchor-side
    records run on unrelated clocks and are joined by (source, seqno) only,
    so no range constraint applies to them.
    """

    start: float
    length: float
    observations: tuple[BeaconObservation, ...]

    # range check at the file formats' 1 ns resolution; sub-ns float
    # slivers at window edges are grouping noise, not modeling errors
    _EDGE_TOLERANCE = 1e-9

    def __post_init__(self) -> None:
        object.__setattr__(self, "observations", tuple(self.observations))
        if not (self.length > 0 and math.isfinite(self.length)):
            raise ValueError("window length must be positive")
        for o in self.observations:
            if o.receiver_kind == "target" and not (
                self.start - self._EDGE_TOLERANCE
                <= o.timestamp
                < self.start + self.length + self._EDGE_TOLERANCE
            ):
                raise ValueError(
                    f"target observation at {o.timestamp} outside window "
                    f"[{self.start}, {self.start + self.length})"
                )

    def target_observations(self) -> list[BeaconObservation]:
        return [o for o in self.observations if o.receiver_kind == "target"]

    def anchor_observations(self) -> list[BeaconObservation]:
        return [o for o in self.observations if o.receiver_kind == "anchor"]


@dataclass(frozen=True)
class SolverParams:
    """Thresholds and switches for the location pipeline.

    ``pairing`` is "all" (every anchor pair once) or "consecutive" (ring of
    target-arrival neighbours); ``outlier_removal`` enables the iterative
    anchor-removal loop. The two flags span the four algorithm variants.
    """

    ranging_err_thr: float = 0.5  # m, anchor-pair ranging error cutoff
    ddoa_err_thr: float = 0.3  # m, distance-difference residual cutoff
    num_anchors_req: int = 3  # 3 for 2D, 4 for 3D
    pairing: str = "all"
    outlier_removal: bool = True
    gn_max_iters: int = 100
    gn_tolerance: float = 1e-6  # m, step-norm stopping criterion

    def __post_init__(self) -> None:
        if not (self.ranging_err_thr > 0 and self.ddoa_err_thr > 0):
            raise ValueError("error thresholds must be positive")
        if self.num_anchors_req not in (3, 4):
            raise ValueError("num_anchors_req must be 3 (2D) or 4 (3D)")
        if self.pairing not in ("all", "consecutive"):
            raise ValueError("pairing must be 'all' or 'consecutive'")
        if self.gn_max_iters < 1:
            raise ValueError("gn_max_iters must be at least 1")
        if not (self.gn_tolerance > 0):
            raise ValueError("gn_tolerance must be positive")


@dataclass(frozen=True)
class LocationFix:
    """Solved position with the surviving anchor set and diagnostics."""

    position: tuple[float, ...]
    used_anchor_ids: frozenset[int]
    reference_anchor_id: int
    residual_rms: float
    removed_anchor_ids: tuple[int, ...] = ()
    window_start: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))
        object.__setattr__(self, "used_anchor_ids", frozenset(self.used_anchor_ids))
        object.__setattr__(self, "removed_anchor_ids", tuple(self.removed_anchor_ids))


def window_observations(
    stream: Iterable[BeaconObservation], length: float
) -> list[ObservationWindow]:
    """Split one target's observation stream into tumbling windows.

    Windows are anchored at the earliest target-side timestamp, which makes
    the grouping invariant to the target's clock offset. Anchor-side
    observations live on unrelated clocks and are joined to a window by
    matching (source, seqno) with a beacon the target received there;
    anchor records for beacons the target never decoded are dropped, since
    no downstream step can use them.

    The stream must contain observations of at most one target receiver.
    """
    if not (length > 0 and math.isfinite(length)):
        raise ValueError("window length must be positive")
    observations = list(stream)
    target_obs = [o for o in observations if o.receiver_kind == "target"]
    if not target_obs:
        return []
    target_ids = {o.receiver_id for o in target_obs}
    if len(target_ids) > 1:
        raise ValueError(f"stream mixes target receivers {sorted(map(str, target_ids))}; window one target at a time")

    start0 = min(o.timestamp for o in target_obs)

    def bucket(ts: float) -> int:
        k = int((ts - start0) // length)
        # repair double-rounding at window edges against the bounds the
        # windows will actually carry
        while ts >= (start0 + k * length) + length:
            k += 1
        while ts < start0 + k * length:
            k -= 1
        return k

    buckets: dict[int, list[BeaconObservation]] = {}
    beacon_window: dict[tuple[int, int], int] = {}
    for o in target_obs:
        k = bucket(o.timestamp)
        buckets.setdefault(k, []).append(o)
        beacon_window.setdefault((o.source_id, o.seqno), k)
    for o in observations:
        if o.receiver_kind != "anchor":
            continue
        k = beacon_window.get((o.source_id, o.seqno))
        if k is not None:
            buckets[k].append(o)

    return [
        ObservationWindow(
            start=start0 + k * length,
            length=length,
            observations=tuple(sorted(buckets[k], key=_observation_sort_key)),
        )
        for k in sorted(buckets)
    ]


@dataclass(frozen=True)
class SelectedBeacon:
    """The beacon chosen to represent one anchor within a window.

    ``anchor_timestamps`` maps receiver anchor id to that anchor's local
    reception time; it always contains the source's own reception.
    """

    source_id: int
    seqno: int
    target_timestamp: float
    anchor_timestamps: Mapping[int, float]


def select_per_anchor(window: ObservationWindow) -> dict[int, SelectedBeacon]:
    """Pick the beacon to use from each source anchor in a window.

    A beacon is usable when its source decoded its own transmission and the
    target decoded it; among usable beacons of one anchor the highest seqno
    wins. Receptions at peer anchors ride along when present — a missing
    peer reception just means that anchor pair cannot be ranged later.
    Duplicate records of the same reception collapse to the earliest
    timestamp, keeping the result independent of input order.
    """
    by_beacon: dict[tuple[int, int], tuple[dict[int, float], list[float]]] = {}
    for o in window.observations:
        anchor_ts, target_ts = by_beacon.setdefault((o.source_id, o.seqno), ({}, []))
        if o.receiver_kind == "anchor":
            prev = anchor_ts.get(o.receiver_id)
            if prev is None or o.timestamp < prev:
                anchor_ts[o.receiver_id] = o.timestamp
        else:
            target_ts.append(o.timestamp)

    selected: dict[int, SelectedBeacon] = {}
    for (source_id, seqno) in sorted(by_beacon):
        anchor_ts, target_ts = by_beacon[(source_id, seqno)]
        if not target_ts or source_id not in anchor_ts:
            continue
        current = selected.get(source_id)
        if current is None or seqno > current.seqno:
            selected[source_id] = SelectedBeacon(
                source_id=source_id,
                seqno=seqno,
                target_timestamp=min(target_ts),
                anchor_timestamps=dict(sorted(anchor_ts.items())),
            )
    return selected
