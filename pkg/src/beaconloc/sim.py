"""Deterministic event-level simulator for anchors, targets, and beacons.

Timestamps are modeled directly (no audio): every reception is the true
emission time plus propagation delay, plus optional per-link extra delay,
per-node clock offset, and Gaussian jitter. Each (beacon, receiver) pair
draws from its own seeded substream, so perturbing one link never changes
any other — single-link experiments replay exactly.

Self receptions are special: an anchor always decodes its own beacon
(never miss-detected, never delayed by a bad path) and the sound travels
its own mic/speaker separation rather than a cross-link distance.
"""

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from .model import BeaconObservation, TestbedConfig, _observation_sort_key

# substream domains within one scenario seed
_STREAM_SCHEDULE = 0
_STREAM_RECEPTION = 1

_RECV_ANCHOR = 0
_RECV_TARGET = 1


@dataclass(frozen=True)
class ScheduleConfig:
    """Beacon emission schedule.

    TDMA assigns one slot per anchor inside a frame of ``cycle_slots``
    slots (defaults to the anchor count; extra slots stay idle), emitting
    whole frames only. "random-backoff" adds a uniform [0, backoff_max)
    delay to every TDMA emission.
    """

    slot_length: float = 1.0
    beacon_duration: float = 0.44
    mode: str = "tdma"
    backoff_max: float = 0.0
    cycle_slots: int | None = None

    def __post_init__(self) -> None:
        if self.mode not in ("tdma", "random-backoff"):
            raise ValueError("schedule mode must be 'tdma' or 'random-backoff'")
        if not (self.slot_length > 0):
            raise ValueError("slot length must be positive")
        if self.mode == "tdma" and not (self.beacon_duration < self.slot_length):
            raise ValueError("beacon duration must be shorter than the slot")
        if self.backoff_max < 0:
            raise ValueError("backoff_max must be >= 0")
        if self.cycle_slots is not None and self.cycle_slots < 1:
            raise ValueError("cycle_slots must be >= 1")


@dataclass(frozen=True)
class NoiseModel:
    """Timestamp-level impairments.

    ``nlos_bias`` maps (source anchor, receiver) to an additive positive
    delay on that directed link; receivers are anchor ids or target
    labels. ``clock_offset`` shifts every timestamp a node records.
    """

    jitter_sigma: float = 0.0
    miss_prob: float = 0.0
    nlos_bias: Mapping[tuple[int, int | str], float] = field(default_factory=dict)
    clock_offset: Mapping[int | str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "nlos_bias", dict(self.nlos_bias))
        object.__setattr__(self, "clock_offset", dict(self.clock_offset))
        if self.jitter_sigma < 0:
            raise ValueError("jitter sigma must be >= 0")
        if not (0.0 <= self.miss_prob <= 1.0):
            raise ValueError("miss probability must be in [0, 1]")
        if any(b < 0 for b in self.nlos_bias.values()):
            raise ValueError("path biases must be >= 0")


@dataclass(frozen=True)
class SimScenario:
    """One reproducible simulation: geometry, schedule, noise, seed."""

    testbed: TestbedConfig
    targets: tuple[tuple[str, tuple[float, ...]], ...]
    schedule: ScheduleConfig = ScheduleConfig()
    noise: NoiseModel = NoiseModel()
    seed: int = 0
    duration: float = 60.0

    def __post_init__(self) -> None:
        object.__setattr__(
            self,
            "targets",
            tuple((str(label), tuple(float(v) for v in pos)) for label, pos in self.targets),
        )
        if not (self.duration > 0):
            raise ValueError("duration must be positive")
        if not (0 <= self.seed < 2**64):
            raise ValueError("seed must be a 64-bit unsigned integer")
        labels = [label for label, _ in self.targets]
        if len(set(labels)) != len(labels):
            raise ValueError("target labels must be unique")
        for label, pos in self.targets:
            if label.isdigit():
                raise ValueError(f"target label {label!r} must not be purely numeric")
            if len(pos) < self.testbed.dimension:
                raise ValueError(f"target {label}: position has too few coordinates")
            if not self.testbed.contains(pos[: self.testbed.dimension]):
                raise ValueError(f"target {label}: position outside bounds")


@dataclass(frozen=True)
class GroundTruth:
    """Everything the simulator knew: emissions, positions, medium."""

    emissions: tuple[tuple[int, int, float], ...]  # (anchor, seqno, emission time)
    anchor_positions: Mapping[int, tuple[float, ...]]
    target_positions: Mapping[str, tuple[float, ...]]
    speed_of_sound: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "anchor_positions", dict(self.anchor_positions))
        object.__setattr__(self, "target_positions", dict(self.target_positions))


def generate_schedule(
    cfg: ScheduleConfig,
    anchor_ids: Sequence[int],
    duration: float,
    rng: np.random.Generator | None = None,
) -> list[tuple[int, int, float]]:
    """Emission plan as (anchor_id, seqno, emission_time), whole frames only.

    Anchor k's slot index is its position in ``anchor_ids``; seqno counts
    frames. Needs a duration long enough for at least one full frame.
    """
    ids = list(anchor_ids)
    if not ids:
        raise ValueError("need at least one anchor")
    cycle = cfg.cycle_slots if cfg.cycle_slots is not None else len(ids)
    if cycle < len(ids):
        raise ValueError("cycle_slots must be at least the anchor count")
    frame = cycle * cfg.slot_length
    rounds = int(duration // frame)
    if rounds < 1:
        raise ValueError(f"duration {duration} too short for one {frame}s TDMA frame")
    if cfg.mode == "random-backoff" and rng is None:
        raise ValueError("random-backoff schedule needs an rng")
    plan = []
    for rnd in range(rounds):
        for idx, anchor_id in enumerate(ids):
            t = (rnd * cycle + idx) * cfg.slot_length
            if cfg.mode == "random-backoff":
                t += float(rng.uniform(0.0, cfg.backoff_max))
            plan.append((anchor_id, rnd, t))
    return plan


def _reception_rng(seed: int, source_id: int, seqno: int, kind: int, index: int):
    ss = np.random.SeedSequence(
        entropy=seed, spawn_key=(_STREAM_RECEPTION, source_id, seqno, kind, index)
    )
    return np.random.Generator(np.random.PCG64(ss))


def simulate(scenario: SimScenario) -> tuple[list[BeaconObservation], GroundTruth]:
    """Run one scenario; returns the observation stream and ground truth.

    Deterministic: identical scenarios produce identical streams. Every
    reception draws its miss coin first and its jitter sample second from
    its own (beacon, receiver) substream, so the stream of one link is
    independent of all others and of the noise settings elsewhere.
    """
    tb = scenario.testbed
    dim = tb.dimension
    c = tb.speed_of_sound
    noise = scenario.noise
    anchors = sorted(tb.anchors, key=lambda a: a.anchor_id)
    anchor_pos = {a.anchor_id: np.asarray(a.position[:dim], dtype=float) for a in anchors}
    target_pos = {
        label: np.asarray(pos[:dim], dtype=float) for label, pos in scenario.targets
    }
    target_index = {label: k for k, (label, _) in enumerate(scenario.targets)}

    schedule_rng = np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(entropy=scenario.seed, spawn_key=(_STREAM_SCHEDULE,)))
    )
    emissions = generate_schedule(
        scenario.schedule, [a.anchor_id for a in anchors], scenario.duration, schedule_rng
    )

    observations: list[BeaconObservation] = []
    for source_id, seqno, t_emit in emissions:
        source = tb.anchor(source_id)
        src = anchor_pos[source_id]
        receivers: list[tuple[int | str, str, int, int]] = [
            (a.anchor_id, "anchor", _RECV_ANCHOR, a.anchor_id) for a in anchors
        ] + [(label, "target", _RECV_TARGET, target_index[label]) for label, _ in scenario.targets]
        for recv_id, kind, kind_code, index in receivers:
            rng = _reception_rng(scenario.seed, source_id, seqno, kind_code, index)
            miss_draw = rng.random()
            jitter_draw = rng.standard_normal()
            if kind == "anchor" and recv_id == source_id:
                delay = source.mic_speaker_sep / c
                bias = 0.0
                missed = False
            else:
                pos = anchor_pos[recv_id] if kind == "anchor" else target_pos[recv_id]
                delay = float(np.linalg.norm(src - pos)) / c
                bias = noise.nlos_bias.get((source_id, recv_id), 0.0)
                missed = miss_draw < noise.miss_prob
            if missed:
                continue
            ts = (
                t_emit
                + delay
                + bias
                + noise.clock_offset.get(recv_id, 0.0)
                + noise.jitter_sigma * jitter_draw
            )
            observations.append(
                BeaconObservation(
                    receiver_id=recv_id,
                    receiver_kind=kind,
                    source_id=source_id,
                    seqno=seqno,
                    timestamp=ts,
                )
            )
    observations.sort(key=_observation_sort_key)
    truth = GroundTruth(
        emissions=tuple(emissions),
        anchor_positions={a: tuple(p) for a, p in anchor_pos.items()},
        target_positions={label: tuple(p) for label, p in target_pos.items()},
        speed_of_sound=c,
    )
    return observations, truth


def true_tdoa(truth: GroundTruth, anchor_i: int, anchor_j: int, position) -> float:
    """Geometric TDoA of j's beacon relative to i's at a known position."""
    x = np.asarray(position, dtype=float)
    d_i = float(np.linalg.norm(x - np.asarray(truth.anchor_positions[anchor_i])))
    d_j = float(np.linalg.norm(x - np.asarray(truth.anchor_positions[anchor_j])))
    return (d_j - d_i) / truth.speed_of_sound
