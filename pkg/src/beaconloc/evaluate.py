"""Evaluation harness: per-fix errors, CDFs, bias, and anchor ablation.

Errors are always computed on the x,y plane, even for 3D fixes; the 95%
quantile uses the nearest-rank method (the ceil(0.95 n)-th order
statistic).
"""

import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from .formats import FixRecord, fix_record, format_seconds
from .model import BeaconObservation, SolverParams, TestbedConfig, window_observations
from .trilateration import locate

# anchor subsets for the ablation sweep, smallest first
DEFAULT_ABLATION_SUBSETS: tuple[frozenset[int], ...] = (
    frozenset({2, 4, 6, 8}),
    frozenset({1, 2, 4, 6, 8}),
    frozenset({1, 2, 3, 4, 6, 8}),
    frozenset({1, 2, 3, 4, 5, 6, 8}),
    frozenset({1, 2, 3, 4, 5, 6, 7, 8}),
)


@dataclass(frozen=True)
class ErrorSummary:
    """Per-fix 2D errors with mean, nearest-rank q95, and a step CDF."""

    errors: tuple[float, ...]  # sorted ascending
    mean: float
    q95: float
    cdf: tuple[tuple[float, float], ...]  # (error, fraction <= error)

    @classmethod
    def from_errors(cls, errors: Iterable[float]) -> "ErrorSummary":
        values = sorted(float(e) for e in errors)
        if not values:
            raise ValueError("cannot summarize zero fixes")
        n = len(values)
        rank = math.ceil(0.95 * n)
        return cls(
            errors=tuple(values),
            mean=sum(values) / n,
            q95=values[rank - 1],
            cdf=tuple((e, (k + 1) / n) for k, e in enumerate(values)),
        )


@dataclass(frozen=True)
class BiasReport:
    """Centroid-minus-truth bias per test location."""

    per_location: Mapping[str, tuple[tuple[float, ...], float]]  # label -> (vector, magnitude)
    average_bias: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "per_location", dict(self.per_location))


def _error_2d(position: Sequence[float], truth: Sequence[float]) -> float:
    dx = position[0] - truth[0]
    dy = position[1] - truth[1]
    return math.hypot(dx, dy)


def compute_error_summary(
    fixes: Sequence[FixRecord], truth: Mapping[str, Sequence[float]]
) -> ErrorSummary:
    """Summarize 2D localization errors of fixes against known positions."""
    if not fixes:
        raise ValueError("no fixes to evaluate")
    errors = []
    for fix in fixes:
        if fix.target_id not in truth:
            raise ValueError(f"no ground truth for target {fix.target_id!r}")
        errors.append(_error_2d(fix.position, truth[fix.target_id]))
    return ErrorSummary.from_errors(errors)


def compute_bias(
    fixes: Sequence[FixRecord], truth: Mapping[str, Sequence[float]]
) -> BiasReport:
    """Bias (estimate centroid minus truth) per location, in the x,y plane."""
    if not fixes:
        raise ValueError("no fixes to evaluate")
    by_label: dict[str, list[FixRecord]] = {}
    for fix in fixes:
        by_label.setdefault(fix.target_id, []).append(fix)
    per_location: dict[str, tuple[tuple[float, ...], float]] = {}
    for label in sorted(by_label):
        if label not in truth:
            raise ValueError(f"no ground truth for target {label!r}")
        centroid = np.mean([f.position[:2] for f in by_label[label]], axis=0)
        vector = (float(centroid[0] - truth[label][0]), float(centroid[1] - truth[label][1]))
        per_location[label] = (vector, math.hypot(*vector))
    average = sum(mag for _, mag in per_location.values()) / len(per_location)
    return BiasReport(per_location=per_location, average_bias=average)


def compute_fixes(
    observations: Iterable[BeaconObservation],
    config: TestbedConfig,
    params: SolverParams,
    window_seconds: float = 18.0,
) -> list[FixRecord]:
    """Window every target's stream and locate each window.

    Results are ordered by (target id, window start) so aggregation is
    deterministic regardless of input interleaving.
    """
    observations = list(observations)
    anchor_obs = [o for o in observations if o.receiver_kind == "anchor"]
    by_target: dict[str, list[BeaconObservation]] = {}
    for o in observations:
        if o.receiver_kind == "target":
            by_target.setdefault(str(o.receiver_id), []).append(o)
    records: list[FixRecord] = []
    for target_id in sorted(by_target):
        stream = by_target[target_id] + anchor_obs
        for window in window_observations(stream, window_seconds):
            fix = locate(window, config, params)
            if fix is not None:
                records.append(fix_record(target_id, fix))
    return records


def filter_anchor_subset(
    observations: Iterable[BeaconObservation], subset: frozenset[int]
) -> list[BeaconObservation]:
    """Remove the beacons and receptions of anchors outside the subset."""
    return [
        o
        for o in observations
        if o.source_id in subset
        and (o.receiver_kind == "target" or o.receiver_id in subset)
    ]


def run_ablation(
    observations: Iterable[BeaconObservation],
    config: TestbedConfig,
    params: SolverParams,
    truth: Mapping[str, Sequence[float]],
    subsets: Sequence[frozenset[int]] | None = None,
    window_seconds: float = 18.0,
) -> list[tuple[str, ErrorSummary]]:
    """Re-run localization with progressively restricted anchor sets.

    Every subset sees the same windows (same observations minus the
    removed anchors' beacons), so differences are attributable to the
    anchor geometry alone.
    """
    observations = list(observations)
    configured = {a.anchor_id for a in config.anchors}
    if subsets is None:
        subsets = [s for s in DEFAULT_ABLATION_SUBSETS if s <= configured]
        if not subsets:
            raise ValueError("no default subsets apply; pass explicit anchor subsets")
    results = []
    for subset in subsets:
        subset = frozenset(subset)
        if not subset <= configured:
            raise ValueError(f"subset {sorted(subset)} contains unknown anchors")
        if len(subset) < params.num_anchors_req:
            raise ValueError(
                f"subset {sorted(subset)} smaller than the {params.num_anchors_req}-anchor minimum"
            )
        fixes = compute_fixes(filter_anchor_subset(observations, subset), config, params,
                              window_seconds)
        label = ",".join(str(a) for a in sorted(subset))
        results.append((label, compute_error_summary(fixes, truth)))
    return results


def render_summary(summary: ErrorSummary, bias: BiasReport | None = None) -> str:
    """Plain tabular text for external plotting."""
    lines = [
        "# localization error summary",
        "# quantile method: nearest-rank",
        f"count {len(summary.errors)}",
        f"mean {format_seconds(summary.mean)}",
        f"q95 {format_seconds(summary.q95)}",
        "# cdf: error_m fraction",
    ]
    lines += [f"{format_seconds(e)} {format_seconds(frac)}" for e, frac in summary.cdf]
    if bias is not None:
        lines.append("# bias: label dx dy magnitude")
        for label, (vector, magnitude) in sorted(bias.per_location.items()):
            lines.append(
                f"bias {label} {format_seconds(vector[0])} {format_seconds(vector[1])} "
                f"{format_seconds(magnitude)}"
            )
        lines.append(f"average_bias {format_seconds(bias.average_bias)}")
    return "".join(line + "\n" for line in lines)


def render_ablation(results: Sequence[tuple[str, ErrorSummary]]) -> str:
    lines = [
        "# ablation over anchor subsets",
        "# quantile method: nearest-rank",
        "# columns: n_anchors subset count mean_m q95_m",
    ]
    for label, summary in results:
        n = label.count(",") + 1
        lines.append(
            f"{n} {label} {len(summary.errors)} "
            f"{format_seconds(summary.mean)} {format_seconds(summary.q95)}"
        )
    return "".join(line + "\n" for line in lines)
