"""Line-oriented text formats for observations, configs, fixes, and truth.

One record per line, space-separated ``KEYWORD key value ...`` tokens.
Numbers are plain decimals (no exponents, no NaN/inf) and every value we
write carries 9 fractional digits, i.e. nanosecond / nanometer file
resolution; values already at that resolution round-trip bit-exactly.
Parsing is strict: a malformed line raises ParseError naming the line
number and the offending field. Blank lines and ``#`` comments are
ignored.
"""

import re
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path

from .model import AnchorConfig, BeaconObservation, LocationFix, TestbedConfig
from .sim import NoiseModel, ScheduleConfig, SimScenario

_INT_RE = re.compile(r"^[+-]?\d+$")
_NUM_RE = re.compile(r"^[+-]?\d+(\.\d+)?$")


class ParseError(ValueError):
    """A malformed line in one of the text formats."""

    def __init__(self, line_number: int, field: str, message: str):
        self.line_number = line_number
        self.field = field
        super().__init__(f"line {line_number}: field '{field}': {message}")


def format_seconds(value: float) -> str:
    """Decimal text at the formats' 9-digit resolution."""
    return f"{value:.9f}"


def _parse_int(token: str, line_no: int, field: str) -> int:
    if not _INT_RE.match(token):
        raise ParseError(line_no, field, f"expected an integer, got {token!r}")
    return int(token)


def _parse_number(token: str, line_no: int, field: str) -> float:
    if not _NUM_RE.match(token):
        raise ParseError(line_no, field, f"expected a decimal number, got {token!r}")
    return float(token)


def _split_records(text: str) -> list[tuple[int, list[str]]]:
    records = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        records.append((line_no, line.split()))
    return records


def _expect_keys(tokens: list[str], keys: Sequence[str], line_no: int) -> list[str]:
    """Check the ``key value`` skeleton after the leading keyword."""
    if len(tokens) != 1 + 2 * len(keys):
        raise ParseError(line_no, "structure", f"expected '{tokens[0]} " +
                         " ".join(f"{k} <{k}>" for k in keys) + "'")
    values = []
    for pos, key in enumerate(keys):
        if tokens[1 + 2 * pos] != key:
            raise ParseError(line_no, key, f"expected keyword {key!r}, got {tokens[1 + 2 * pos]!r}")
        values.append(tokens[2 + 2 * pos])
    return values


# ---------------------------------------------------------------------------
# observations


def observation_line(obs: BeaconObservation) -> str:
    return (
        f"OBS {obs.receiver_kind} {obs.receiver_id} src {obs.source_id} "
        f"seq {obs.seqno} ts {format_seconds(obs.timestamp)}"
    )


def parse_observation_line(line: str, line_no: int = 1) -> BeaconObservation:
    tokens = line.split()
    if not tokens or tokens[0] != "OBS":
        raise ParseError(line_no, "keyword", "expected an OBS record")
    if len(tokens) != 9 or tokens[3] != "src" or tokens[5] != "seq" or tokens[7] != "ts":
        raise ParseError(line_no, "structure",
                         "expected 'OBS <kind> <receiver> src <id> seq <n> ts <seconds>'")
    kind = tokens[1]
    if kind not in ("anchor", "target"):
        raise ParseError(line_no, "kind", f"receiver kind must be 'anchor' or 'target', got {kind!r}")
    receiver: int | str
    if kind == "anchor":
        receiver = _parse_int(tokens[2], line_no, "receiver")
    else:
        receiver = tokens[2]
    return BeaconObservation(
        receiver_id=receiver,
        receiver_kind=kind,
        source_id=_parse_int(tokens[4], line_no, "src"),
        seqno=_parse_int(tokens[6], line_no, "seq"),
        timestamp=_parse_number(tokens[8], line_no, "ts"),
    )


def format_observations(observations: Iterable[BeaconObservation]) -> str:
    return "".join(observation_line(o) + "\n" for o in observations)


def parse_observations(text: str) -> list[BeaconObservation]:
    return [parse_observation_line(" ".join(tokens), line_no)
            for line_no, tokens in _split_records(text)]


def write_observations(path, observations: Iterable[BeaconObservation]) -> None:
    Path(path).write_text(format_observations(observations))


def read_observations(path) -> list[BeaconObservation]:
    return parse_observations(Path(path).read_text())


# ---------------------------------------------------------------------------
# testbed config


def _anchor_lines(config: TestbedConfig) -> list[str]:
    lines = []
    for a in config.anchors:
        parts = [f"anchor id {a.anchor_id}",
                 f"x {format_seconds(a.position[0])}", f"y {format_seconds(a.position[1])}"]
        if len(a.position) == 3:
            parts.append(f"z {format_seconds(a.position[2])}")
        parts.append(f"sep {format_seconds(a.mic_speaker_sep)}")
        lines.append(" ".join(parts))
    return lines


def format_testbed(config: TestbedConfig) -> str:
    lines = [
        f"dimension {config.dimension}",
        f"speed_of_sound {format_seconds(config.speed_of_sound)}",
        "bounds min " + " ".join(format_seconds(v) for v in config.bounds_min)
        + " max " + " ".join(format_seconds(v) for v in config.bounds_max),
    ]
    lines += _anchor_lines(config)
    return "".join(line + "\n" for line in lines)


def _parse_anchor_tokens(tokens: list[str], line_no: int) -> AnchorConfig:
    if len(tokens) % 2 != 1:
        raise ParseError(line_no, "structure", "anchor line must be key/value pairs")
    fields: dict[str, str] = {}
    for pos in range(1, len(tokens), 2):
        key = tokens[pos]
        if key in fields:
            raise ParseError(line_no, key, "duplicate field")
        fields[key] = tokens[pos + 1]
    unknown = set(fields) - {"id", "x", "y", "z", "sep"}
    if unknown:
        raise ParseError(line_no, sorted(unknown)[0], "unknown anchor field")
    for required in ("id", "x", "y"):
        if required not in fields:
            raise ParseError(line_no, required, "missing anchor field")
    position = [_parse_number(fields["x"], line_no, "x"), _parse_number(fields["y"], line_no, "y")]
    if "z" in fields:
        position.append(_parse_number(fields["z"], line_no, "z"))
    return AnchorConfig(
        anchor_id=_parse_int(fields["id"], line_no, "id"),
        position=tuple(position),
        mic_speaker_sep=_parse_number(fields.get("sep", "0"), line_no, "sep"),
    )


def _parse_bounds_tokens(tokens: list[str], line_no: int) -> tuple[tuple[float, ...], tuple[float, ...]]:
    if len(tokens) < 2 or tokens[1] != "min" or "max" not in tokens:
        raise ParseError(line_no, "structure", "expected 'bounds min <coords> max <coords>'")
    split = tokens.index("max")
    lo = tuple(_parse_number(t, line_no, "min") for t in tokens[2:split])
    hi = tuple(_parse_number(t, line_no, "max") for t in tokens[split + 1:])
    if not lo or len(lo) != len(hi):
        raise ParseError(line_no, "bounds", "min and max need the same number of coordinates")
    return lo, hi


class _TestbedBuilder:
    """Accumulates testbed lines; shared by the config and scenario parsers."""

    def __init__(self):
        self.dimension: int | None = None
        self.speed_of_sound: float | None = None
        self.bounds: tuple[tuple[float, ...], tuple[float, ...]] | None = None
        self.anchors: list[AnchorConfig] = []

    def handles(self, keyword: str) -> bool:
        return keyword in ("dimension", "speed_of_sound", "bounds", "anchor")

    def feed(self, tokens: list[str], line_no: int) -> None:
        keyword = tokens[0]
        if keyword == "dimension":
            (value,) = _expect_values(tokens, 1, line_no, "dimension")
            self.dimension = _parse_int(value, line_no, "dimension")
        elif keyword == "speed_of_sound":
            (value,) = _expect_values(tokens, 1, line_no, "speed_of_sound")
            self.speed_of_sound = _parse_number(value, line_no, "speed_of_sound")
        elif keyword == "bounds":
            self.bounds = _parse_bounds_tokens(tokens, line_no)
        elif keyword == "anchor":
            self.anchors.append(_parse_anchor_tokens(tokens, line_no))

    def build(self, line_no: int) -> TestbedConfig:
        if self.dimension is None:
            raise ParseError(line_no, "dimension", "missing 'dimension' line")
        if self.bounds is None:
            raise ParseError(line_no, "bounds", "missing 'bounds' line")
        if not self.anchors:
            raise ParseError(line_no, "anchor", "no anchor lines")
        kwargs = {}
        if self.speed_of_sound is not None:
            kwargs["speed_of_sound"] = self.speed_of_sound
        try:
            return TestbedConfig(
                anchors=tuple(self.anchors),
                bounds_min=self.bounds[0],
                bounds_max=self.bounds[1],
                dimension=self.dimension,
                **kwargs,
            )
        except ValueError as exc:
            raise ParseError(line_no, "testbed", str(exc)) from exc


def _expect_values(tokens: list[str], count: int, line_no: int, field: str) -> list[str]:
    if len(tokens) != count + 1:
        raise ParseError(line_no, field, f"expected {count} value(s)")
    return tokens[1:]


def parse_testbed(text: str) -> TestbedConfig:
    builder = _TestbedBuilder()
    last_line = 0
    for line_no, tokens in _split_records(text):
        last_line = line_no
        if not builder.handles(tokens[0]):
            raise ParseError(line_no, tokens[0], "unknown keyword in testbed config")
        builder.feed(tokens, line_no)
    return builder.build(last_line + 1)


def write_testbed(path, config: TestbedConfig) -> None:
    Path(path).write_text(format_testbed(config))


def read_testbed(path) -> TestbedConfig:
    return parse_testbed(Path(path).read_text())


# ---------------------------------------------------------------------------
# scenario


def format_scenario(scenario: SimScenario) -> str:
    lines = format_testbed(scenario.testbed).splitlines()
    sched = scenario.schedule
    sched_line = (
        f"schedule mode {sched.mode} slot {format_seconds(sched.slot_length)} "
        f"beacon {format_seconds(sched.beacon_duration)}"
    )
    if sched.cycle_slots is not None:
        sched_line += f" cycle {sched.cycle_slots}"
    if sched.mode == "random-backoff":
        sched_line += f" backoff_max {format_seconds(sched.backoff_max)}"
    lines.append(sched_line)
    lines.append(f"duration {format_seconds(scenario.duration)}")
    lines.append(f"seed {scenario.seed}")
    noise = scenario.noise
    lines.append(f"jitter {format_seconds(noise.jitter_sigma)}")
    lines.append(f"miss_prob {format_seconds(noise.miss_prob)}")
    for label, pos in scenario.targets:
        parts = [f"target label {label}", f"x {format_seconds(pos[0])}", f"y {format_seconds(pos[1])}"]
        if len(pos) == 3:
            parts.append(f"z {format_seconds(pos[2])}")
        lines.append(" ".join(parts))
    for (src, recv), bias in sorted(noise.nlos_bias.items(), key=lambda kv: (kv[0][0], str(kv[0][1]))):
        lines.append(f"nlos src {src} recv {recv} bias {format_seconds(bias)}")
    for node, offset in sorted(noise.clock_offset.items(), key=lambda kv: str(kv[0])):
        lines.append(f"clock node {node} offset {format_seconds(offset)}")
    return "".join(line + "\n" for line in lines)


def _parse_node_token(token: str) -> int | str:
    """Anchor ids are numeric; anything else is a target label."""
    return int(token) if _INT_RE.match(token) else token


def parse_scenario(text: str) -> SimScenario:
    builder = _TestbedBuilder()
    schedule: ScheduleConfig | None = None
    duration: float | None = None
    seed = 0
    jitter = 0.0
    miss_prob = 0.0
    targets: list[tuple[str, tuple[float, ...]]] = []
    nlos: dict[tuple[int, int | str], float] = {}
    clocks: dict[int | str, float] = {}
    last_line = 0

    for line_no, tokens in _split_records(text):
        last_line = line_no
        keyword = tokens[0]
        if builder.handles(keyword):
            builder.feed(tokens, line_no)
        elif keyword == "schedule":
            fields = _key_value_fields(tokens, line_no,
                                       {"mode", "slot", "beacon", "cycle", "backoff_max"})
            if "mode" not in fields:
                raise ParseError(line_no, "mode", "schedule line needs a mode")
            try:
                schedule = ScheduleConfig(
                    mode=fields["mode"],
                    slot_length=_parse_number(fields.get("slot", "1"), line_no, "slot"),
                    beacon_duration=_parse_number(fields.get("beacon", "0.44"), line_no, "beacon"),
                    backoff_max=_parse_number(fields.get("backoff_max", "0"), line_no, "backoff_max"),
                    cycle_slots=(_parse_int(fields["cycle"], line_no, "cycle")
                                 if "cycle" in fields else None),
                )
            except ValueError as exc:
                raise ParseError(line_no, "schedule", str(exc)) from exc
        elif keyword == "duration":
            (value,) = _expect_values(tokens, 1, line_no, "duration")
            duration = _parse_number(value, line_no, "duration")
        elif keyword == "seed":
            (value,) = _expect_values(tokens, 1, line_no, "seed")
            seed = _parse_int(value, line_no, "seed")
        elif keyword == "jitter":
            (value,) = _expect_values(tokens, 1, line_no, "jitter")
            jitter = _parse_number(value, line_no, "jitter")
        elif keyword == "miss_prob":
            (value,) = _expect_values(tokens, 1, line_no, "miss_prob")
            miss_prob = _parse_number(value, line_no, "miss_prob")
        elif keyword == "target":
            fields = _key_value_fields(tokens, line_no, {"label", "x", "y", "z"})
            for required in ("label", "x", "y"):
                if required not in fields:
                    raise ParseError(line_no, required, "missing target field")
            pos = [_parse_number(fields["x"], line_no, "x"),
                   _parse_number(fields["y"], line_no, "y")]
            if "z" in fields:
                pos.append(_parse_number(fields["z"], line_no, "z"))
            targets.append((fields["label"], tuple(pos)))
        elif keyword == "nlos":
            src_s, recv_s, bias_s = _expect_keys(tokens, ("src", "recv", "bias"), line_no)
            nlos[(_parse_int(src_s, line_no, "src"), _parse_node_token(recv_s))] = _parse_number(
                bias_s, line_no, "bias")
        elif keyword == "clock":
            node_s, offset_s = _expect_keys(tokens, ("node", "offset"), line_no)
            clocks[_parse_node_token(node_s)] = _parse_number(offset_s, line_no, "offset")
        else:
            raise ParseError(line_no, keyword, "unknown keyword in scenario")

    testbed = builder.build(last_line + 1)
    if duration is None:
        raise ParseError(last_line + 1, "duration", "missing 'duration' line")
    try:
        return SimScenario(
            testbed=testbed,
            targets=tuple(targets),
            schedule=schedule if schedule is not None else ScheduleConfig(),
            noise=NoiseModel(jitter_sigma=jitter, miss_prob=miss_prob,
                             nlos_bias=nlos, clock_offset=clocks),
            seed=seed,
            duration=duration,
        )
    except ValueError as exc:
        raise ParseError(last_line + 1, "scenario", str(exc)) from exc


def _key_value_fields(tokens: list[str], line_no: int, allowed: set[str]) -> dict[str, str]:
    if len(tokens) % 2 != 1:
        raise ParseError(line_no, "structure", f"{tokens[0]} line must be key/value pairs")
    fields: dict[str, str] = {}
    for pos in range(1, len(tokens), 2):
        key = tokens[pos]
        if key not in allowed:
            raise ParseError(line_no, key, f"unknown {tokens[0]} field")
        if key in fields:
            raise ParseError(line_no, key, "duplicate field")
        fields[key] = tokens[pos + 1]
    return fields


def write_scenario(path, scenario: SimScenario) -> None:
    Path(path).write_text(format_scenario(scenario))


def read_scenario(path) -> SimScenario:
    return parse_scenario(Path(path).read_text())


# ---------------------------------------------------------------------------
# fixes


@dataclass(frozen=True)
class FixRecord:
    """One solved fix as stored in a fix file."""

    target_id: str
    window_start: float
    position: tuple[float, ...]
    anchor_ids: tuple[int, ...]
    residual_rms: float


def fix_record(target_id: str, fix: LocationFix) -> FixRecord:
    return FixRecord(
        target_id=str(target_id),
        window_start=fix.window_start,
        position=tuple(fix.position),
        anchor_ids=tuple(sorted(fix.used_anchor_ids)),
        residual_rms=fix.residual_rms,
    )


def fix_line(record: FixRecord) -> str:
    coords = f"x {format_seconds(record.position[0])} y {format_seconds(record.position[1])}"
    if len(record.position) == 3:
        coords += f" z {format_seconds(record.position[2])}"
    anchors = ",".join(str(a) for a in record.anchor_ids)
    return (
        f"FIX target {record.target_id} window {format_seconds(record.window_start)} "
        f"{coords} anchors {anchors} rms {format_seconds(record.residual_rms)}"
    )


def parse_fix_line(line: str, line_no: int = 1) -> FixRecord:
    tokens = line.split()
    if not tokens or tokens[0] != "FIX":
        raise ParseError(line_no, "keyword", "expected a FIX record")
    has_z = len(tokens) == 15
    if has_z:
        keys = ("target", "window", "x", "y", "z", "anchors", "rms")
    elif len(tokens) == 13:
        keys = ("target", "window", "x", "y", "anchors", "rms")
    else:
        raise ParseError(line_no, "structure",
                         "expected 'FIX target <id> window <s> x <m> y <m> [z <m>] anchors <ids> rms <m>'")
    values = dict(zip(keys, _expect_keys(tokens, keys, line_no)))
    position = [_parse_number(values["x"], line_no, "x"), _parse_number(values["y"], line_no, "y")]
    if has_z:
        position.append(_parse_number(values["z"], line_no, "z"))
    anchor_tokens = values["anchors"].split(",")
    return FixRecord(
        target_id=values["target"],
        window_start=_parse_number(values["window"], line_no, "window"),
        position=tuple(position),
        anchor_ids=tuple(_parse_int(t, line_no, "anchors") for t in anchor_tokens),
        residual_rms=_parse_number(values["rms"], line_no, "rms"),
    )


def format_fixes(records: Iterable[FixRecord]) -> str:
    return "".join(fix_line(r) + "\n" for r in records)


def parse_fixes(text: str) -> list[FixRecord]:
    return [parse_fix_line(" ".join(tokens), line_no) for line_no, tokens in _split_records(text)]


def write_fixes(path, records: Iterable[FixRecord]) -> None:
    Path(path).write_text(format_fixes(records))


def read_fixes(path) -> list[FixRecord]:
    return parse_fixes(Path(path).read_text())


# ---------------------------------------------------------------------------
# ground-truth positions


def format_truth(positions: Mapping[str, Iterable[float]]) -> str:
    lines = []
    for label in sorted(positions):
        pos = tuple(float(v) for v in positions[label])
        parts = [f"TRUTH target {label}", f"x {format_seconds(pos[0])}", f"y {format_seconds(pos[1])}"]
        if len(pos) == 3:
            parts.append(f"z {format_seconds(pos[2])}")
        lines.append(" ".join(parts))
    return "".join(line + "\n" for line in lines)


def parse_truth(text: str) -> dict[str, tuple[float, ...]]:
    positions: dict[str, tuple[float, ...]] = {}
    for line_no, tokens in _split_records(text):
        if tokens[0] != "TRUTH":
            raise ParseError(line_no, "keyword", "expected a TRUTH record")
        has_z = len(tokens) == 9
        if has_z:
            keys = ("target", "x", "y", "z")
        elif len(tokens) == 7:
            keys = ("target", "x", "y")
        else:
            raise ParseError(line_no, "structure",
                             "expected 'TRUTH target <id> x <m> y <m> [z <m>]'")
        values = dict(zip(keys, _expect_keys(tokens, keys, line_no)))
        pos = [_parse_number(values["x"], line_no, "x"), _parse_number(values["y"], line_no, "y")]
        if has_z:
            pos.append(_parse_number(values["z"], line_no, "z"))
        positions[values["target"]] = tuple(pos)
    return positions


def write_truth(path, positions: Mapping[str, Iterable[float]]) -> None:
    Path(path).write_text(format_truth(positions))


def read_truth(path) -> dict[str, tuple[float, ...]]:
    return parse_truth(Path(path).read_text())
