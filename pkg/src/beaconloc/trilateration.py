"""TDoA construction, pair selection, bounded Gauss-Newton solving, and
iterative removal of outlier anchors.

Measurement convention: for an ordered pair (i, j), ``ddoa_ij``
approximates dist(j, x) - dist(i, x) at the true position x, so the
fitted residual is ``ddoa_ij - (dist(j, x) - dist(i, x))`` and vanishes at
the truth on clean data.
"""

import dataclasses
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from .model import (
    LocationFix,
    ObservationWindow,
    SolverParams,
    TestbedConfig,
    select_per_anchor,
)
from .ranging import OffsetSet, detect_outlier_offsets

VARIANT_NAMES = ("all-raw", "consec-raw", "all-robust", "consec-robust")

_DIST_FLOOR = 1e-12  # guards unit vectors when an iterate lands on an anchor


@dataclass(frozen=True)
class TdoaPair:
    """One ordered TDoA measurement between anchors i and j.

    ``ddoa`` is the distance difference, speed of sound times ``tdoa``.
    """

    anchor_i: int
    anchor_j: int
    tdoa: float
    ddoa: float


@dataclass(frozen=True)
class SolveDiagnostics:
    """What the bounded Gauss-Newton run did."""

    iterations: int
    final_objective: float  # m^2
    objective_history: tuple[float, ...] = ()


def variant_params(name: str, base: SolverParams | None = None) -> SolverParams:
    """SolverParams for one of the four pipeline variants.

    ``name`` combines a pairing mode with an outlier-removal switch, e.g.
    "all-robust" or "consecxraw" ('-' and 'x' both separate). Thresholds
    and solver settings come from ``base`` when given.
    """
    token = name.replace("x", "-").lower()
    try:
        pairing_key, removal_key = token.split("-")
        pairing = {"all": "all", "consec": "consecutive"}[pairing_key]
        removal = {"raw": False, "robust": True}[removal_key]
    except (ValueError, KeyError):
        raise ValueError(f"unknown variant {name!r}; expected one of {VARIANT_NAMES}") from None
    base = base if base is not None else SolverParams()
    return dataclasses.replace(base, pairing=pairing, outlier_removal=removal)


def compute_tdoa(t_target_k: float, t_target_r: float, offset_rk: float) -> float:
    """TDoA of anchor k's beacon relative to the reference anchor r's.

    ``offset_rk`` is k's emission time minus r's in a common timescale.
    The result times the speed of sound equals dist(k, x) - dist(r, x) at
    the true target position x.
    """
    return t_target_k - t_target_r - offset_rk


def permute_tdoas(
    reference_id: int, tdoas_from_ref: Mapping[int, float], speed_of_sound: float
) -> list[TdoaPair]:
    """Expand reference-relative TDoAs into all ordered anchor pairs.

    tdoa_ij = tdoa_rj - tdoa_ri, antisymmetric by construction. The input
    must contain the reference itself with value 0.
    """
    if tdoas_from_ref.get(reference_id) != 0.0:
        raise ValueError("tdoas_from_ref must contain the reference anchor with value 0")
    ids = sorted(tdoas_from_ref)
    pairs = []
    for i in ids:
        for j in ids:
            if i == j:
                continue
            tdoa = tdoas_from_ref[j] - tdoas_from_ref[i]
            pairs.append(TdoaPair(i, j, tdoa, speed_of_sound * tdoa))
    return pairs


def select_pairs(
    pairs: Sequence[TdoaPair], mode: str, arrival_order: Sequence[int]
) -> list[TdoaPair]:
    """Restrict ordered TDoA pairs to the set that actually gets fitted.

    "all" keeps each unordered pair once, oriented earlier target arrival
    first. "consecutive" keeps the ring of adjacent arrivals, wrapping the
    last arrival back to the first. ``arrival_order`` must cover every
    anchor appearing in ``pairs``.
    """
    rank = {a: k for k, a in enumerate(arrival_order)}
    members = {p.anchor_i for p in pairs} | {p.anchor_j for p in pairs}
    missing = members - rank.keys()
    if missing:
        raise ValueError(f"arrival order is missing anchors {sorted(missing)}")
    if mode == "all":
        return [p for p in pairs if rank[p.anchor_i] < rank[p.anchor_j]]
    if mode == "consecutive":
        ring = [a for a in arrival_order if a in members]
        if len(ring) < 2:
            return []
        by_key = {(p.anchor_i, p.anchor_j): p for p in pairs}
        wanted = [(ring[k], ring[(k + 1) % len(ring)]) for k in range(len(ring))]
        if len(ring) == 2:
            wanted = wanted[:1]  # the wraparound would repeat the same unordered pair
        return [by_key[key] for key in wanted]
    raise ValueError(f"unknown pairing mode {mode!r}")


def prepare_pairs(
    offset_set: OffsetSet,
    target_timestamps: Mapping[int, float],
    speed_of_sound: float,
) -> tuple[list[TdoaPair], list[int]]:
    """Ordered ddoa pairs plus target-arrival order for an offset set.

    Only anchors that are both offset-validated and heard by the target
    participate; the reference must be among them.
    """
    ref = offset_set.reference_id
    if ref not in target_timestamps:
        raise ValueError("target did not hear the reference anchor")
    members = sorted(k for k in offset_set.valid_anchor_ids if k in target_timestamps)
    tdoas = {
        k: compute_tdoa(target_timestamps[k], target_timestamps[ref], offset_set.offsets[k])
        for k in members
    }
    pairs = permute_tdoas(ref, tdoas, speed_of_sound)
    arrival = sorted(members, key=lambda k: (target_timestamps[k], k))
    return pairs, arrival


def solve_position(
    pairs: Sequence[TdoaPair],
    anchor_positions: Mapping[int, Iterable[float]],
    bounds: tuple[Iterable[float], Iterable[float]],
    init: Iterable[float],
    params: SolverParams,
) -> tuple[np.ndarray, SolveDiagnostics]:
    """Minimize the summed squared pair residuals inside a bounding box.

    Damped Gauss-Newton: the full step is halved (up to 20 times) until
    the objective does not increase, and every iterate is clamped to the
    box, so the objective is non-increasing across accepted iterates.
    Stops when the accepted step is shorter than ``params.gn_tolerance``
    or after ``params.gn_max_iters`` iterations.
    """
    lo = np.asarray(bounds[0], dtype=float)
    hi = np.asarray(bounds[1], dtype=float)
    dim = lo.size
    member_ids = sorted({p.anchor_i for p in pairs} | {p.anchor_j for p in pairs})
    if len(member_ids) < dim + 1:
        raise ValueError(
            f"underdetermined: {len(member_ids)} anchors for {dim}D, need {dim + 1}"
        )
    pos = {a: np.asarray(anchor_positions[a], dtype=float)[:dim] for a in member_ids}
    p_i = np.stack([pos[p.anchor_i] for p in pairs])
    p_j = np.stack([pos[p.anchor_j] for p in pairs])
    ddoa = np.asarray([p.ddoa for p in pairs], dtype=float)

    def residuals(x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        d_i = np.linalg.norm(x - p_i, axis=1)
        d_j = np.linalg.norm(x - p_j, axis=1)
        return ddoa - (d_j - d_i), d_i, d_j

    x = np.clip(np.asarray(init, dtype=float), lo, hi)
    if x.size != dim:
        raise ValueError("init must match the bounds dimension")
    r, d_i, d_j = residuals(x)
    f = float(r @ r)
    if not math.isfinite(f):
        raise ValueError("objective is not finite at the initial point")

    history = [f]
    iterations = 0
    for _ in range(params.gn_max_iters):
        di = np.maximum(d_i, _DIST_FLOOR)[:, None]
        dj = np.maximum(d_j, _DIST_FLOOR)[:, None]
        jac = (x - p_i) / di - (x - p_j) / dj
        step, *_ = np.linalg.lstsq(jac, -r, rcond=None)
        if not np.all(np.isfinite(step)):
            break
        accepted = None
        alpha = 1.0
        for _ in range(21):  # full step plus up to 20 halvings
            x_try = np.clip(x + alpha * step, lo, hi)
            r_try, di_try, dj_try = residuals(x_try)
            f_try = float(r_try @ r_try)
            if math.isfinite(f_try) and f_try <= f:
                accepted = (x_try, r_try, di_try, dj_try, f_try)
                break
            alpha *= 0.5
        if accepted is None:
            break
        x_new, r, d_i, d_j, f = accepted
        step_len = float(np.linalg.norm(x_new - x))
        x = x_new
        history.append(f)
        iterations += 1
        if step_len < params.gn_tolerance:
            break
    return x, SolveDiagnostics(iterations, f, tuple(history))


def count_bad_pairs(
    pairs: Sequence[TdoaPair],
    anchor_positions: Mapping[int, Iterable[float]],
    position: Iterable[float],
    threshold: float,
) -> dict[int, int]:
    """Per-anchor count of ordered pairs whose residual magnitude exceeds
    ``threshold`` at the given position.

    Pass the full ordered pair set: an ordered pair charges only its first
    anchor, and the mirrored pair charges the other, so each anchor ends
    up counting its bad partners.
    """
    x = np.asarray(position, dtype=float)
    dim = x.size
    pos = {}
    counts: dict[int, int] = {}
    for p in pairs:
        for a in (p.anchor_i, p.anchor_j):
            if a not in pos:
                pos[a] = np.asarray(anchor_positions[a], dtype=float)[:dim]
                counts[a] = 0
        err = p.ddoa - (
            float(np.linalg.norm(x - pos[p.anchor_j]))
            - float(np.linalg.norm(x - pos[p.anchor_i]))
        )
        if abs(err) > threshold:
            counts[p.anchor_i] += 1
    return counts


def _anchor_centroid(ids: Iterable[int], positions: Mapping[int, np.ndarray]) -> np.ndarray:
    return np.mean([positions[a] for a in sorted(ids)], axis=0)


def _fit_pair_subset(
    pairs_all: Sequence[TdoaPair], members: set[int], mode: str, arrival: Sequence[int]
) -> tuple[list[TdoaPair], list[TdoaPair], list[int]]:
    sub = [p for p in pairs_all if p.anchor_i in members and p.anchor_j in members]
    order = [a for a in arrival if a in members]
    return select_pairs(sub, mode, order), sub, order


def iterative_outlier_removal(
    offset_set: OffsetSet,
    target_timestamps: Mapping[int, float],
    config: TestbedConfig,
    params: SolverParams,
    window_start: float = 0.0,
) -> LocationFix | None:
    """Solve repeatedly, dropping the anchor with the most bad pairs.

    Each round fits a position over the current anchor set, then scans
    every ordered pair's residual against ``params.ddoa_err_thr``
    regardless of pairing mode (the mode only restricts the fitted
    objective). If any pair is bad, the anchor charged most often goes
    (ties to the lowest id) and the round repeats; otherwise the fix is
    returned. Returns None once fewer than ``params.num_anchors_req``
    anchors remain.
    """
    if offset_set.reference_id not in target_timestamps:
        return None
    pairs_all, arrival = prepare_pairs(offset_set, target_timestamps, config.speed_of_sound)
    positions = config.anchor_positions()
    bounds = (config.bounds_min, config.bounds_max)
    members = set(arrival)
    removed: list[int] = []
    while True:
        if len(members) < params.num_anchors_req:
            return None
        fit_pairs, sub_pairs, _ = _fit_pair_subset(pairs_all, members, params.pairing, arrival)
        try:
            x, diag = solve_position(
                fit_pairs, positions, bounds, _anchor_centroid(members, positions), params
            )
        except ValueError:
            return None
        counts = count_bad_pairs(sub_pairs, positions, x, params.ddoa_err_thr)
        worst = max(counts.values(), default=0)
        if worst > 0:
            victim = min(a for a, n in counts.items() if n == worst)
            members.discard(victim)
            removed.append(victim)
            continue
        return LocationFix(
            position=tuple(float(v) for v in x),
            used_anchor_ids=frozenset(members),
            reference_anchor_id=offset_set.reference_id,
            residual_rms=math.sqrt(diag.final_objective / len(fit_pairs)) if fit_pairs else 0.0,
            removed_anchor_ids=tuple(removed),
            window_start=window_start,
        )


def locate(
    window: ObservationWindow, config: TestbedConfig, params: SolverParams
) -> LocationFix | None:
    """Full pipeline from one observation window to a location fix.

    Selection, outlier-offset detection, TDoA construction, pair
    selection, then either a single bounded solve or the iterative
    removal loop. Returns None whenever the data cannot support a fix;
    merely noisy data never raises.
    """
    selection = select_per_anchor(window)
    if len(selection) < params.num_anchors_req:
        return None
    offset_set = detect_outlier_offsets(selection, config, params)
    if offset_set is None:
        return None
    target_ts = {a: selection[a].target_timestamp for a in sorted(offset_set.valid_anchor_ids)}

    if params.outlier_removal:
        return iterative_outlier_removal(
            offset_set, target_ts, config, params, window_start=window.start
        )

    pairs_all, arrival = prepare_pairs(offset_set, target_ts, config.speed_of_sound)
    positions = config.anchor_positions()
    members = set(arrival)
    fit_pairs, _, _ = _fit_pair_subset(pairs_all, members, params.pairing, arrival)
    try:
        x, diag = solve_position(
            fit_pairs,
            positions,
            (config.bounds_min, config.bounds_max),
            _anchor_centroid(members, positions),
            params,
        )
    except ValueError:
        return None
    return LocationFix(
        position=tuple(float(v) for v in x),
        used_anchor_ids=frozenset(members),
        reference_anchor_id=offset_set.reference_id,
        residual_rms=math.sqrt(diag.final_objective / len(fit_pairs)) if fit_pairs else 0.0,
        removed_anchor_ids=(),
        window_start=window.start,
    )
