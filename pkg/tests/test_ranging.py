import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from beaconloc import (
    AnchorConfig,
    NoiseModel,
    PairIntervals,
    SelectedBeacon,
    SolverParams,
    TestbedConfig,
    detect_outlier_offsets,
    estimate_anchor_distance,
    estimate_time_offset,
    pair_intervals,
    pairwise_ranging_errors,
    select_per_anchor,
    simulate,
    window_observations,
)
from conftest import office_scenario, target_stream
from oracles import arrival_time

# exactly representable values so equality assertions stay exact
dyadic = st.integers(min_value=-400, max_value=400).map(lambda n: n / 4.0)


def s1_intervals(corrupt_b0_ms: float = 0.0) -> PairIntervals:
    """Two anchors 17 m apart, c = 340, emissions at t=0 and t=1.

    Timestamps come straight from the event oracle; the optional
    corruption delays B's reception of A's beacon.
    """
    a, b = (0.0, 0.0), (17.0, 0.0)
    c = 340.0
    t_a0 = arrival_time(0.0, a, a, c, self_sep=0.0)
    t_a1 = arrival_time(1.0, b, a, c)
    t_b0 = arrival_time(0.0, a, b, c) + corrupt_b0_ms * 1e-3
    t_b1 = arrival_time(1.0, b, b, c, self_sep=0.0)
    return PairIntervals(1, 2, interval_a=t_a1 - t_a0, interval_b=t_b1 - t_b0)


class TestTimeOffset:
    def test_event_oracle_case(self):
        pair = s1_intervals()
        assert pair.interval_a == pytest.approx(1.05)
        assert pair.interval_b == pytest.approx(0.95)
        assert estimate_time_offset(pair, 340.0) == pytest.approx(1.0, abs=1e-12)

    def test_symmetric_intervals_pass_through(self):
        pair = PairIntervals(1, 2, 0.75, 0.75, sep_a=0.2, sep_b=0.2)
        assert estimate_time_offset(pair, 340.0) == 0.75

    def test_separation_correction(self):
        pair = PairIntervals(1, 2, 1.05, 0.95, sep_a=0.34, sep_b=0.0)
        # 1.0 + 0.34 / (2 * 340)
        assert estimate_time_offset(pair, 340.0) == pytest.approx(1.0005, abs=1e-12)

    def test_negative_when_b_first(self):
        pair = PairIntervals(1, 2, -0.95, -1.05)
        assert estimate_time_offset(pair, 340.0) == pytest.approx(-1.0, abs=1e-12)


class TestAnchorDistance:
    def test_event_oracle_case(self):
        assert estimate_anchor_distance(s1_intervals(), 340.0) == pytest.approx(17.0, abs=1e-9)

    def test_colocated(self):
        pair = PairIntervals(1, 2, 0.6, 0.6)
        assert estimate_anchor_distance(pair, 340.0) == 0.0

    def test_corrupted_cross_timestamp_shifts_by_half_c_delta(self):
        pair = s1_intervals(corrupt_b0_ms=5.0)
        estimated = estimate_anchor_distance(pair, 340.0)
        assert estimated == pytest.approx(17.85, abs=1e-9)
        assert abs(estimated - 17.0) == pytest.approx(0.85, abs=1e-9)

    @given(dyadic, dyadic, dyadic)
    def test_symmetric_delay_moves_distance_not_offset(self, interval_a, interval_b, delta):
        # delaying both cross receptions by the same amount shifts the
        # distance by exactly c*delta and the offset by exactly zero
        base = PairIntervals(1, 2, interval_a, interval_b)
        bumped = PairIntervals(1, 2, interval_a + delta, interval_b - delta)
        c = 256.0
        assert estimate_time_offset(bumped, c) == estimate_time_offset(base, c)
        assert estimate_anchor_distance(bumped, c) == estimate_anchor_distance(base, c) + c * delta

    @given(dyadic, dyadic, dyadic, dyadic)
    def test_single_node_clock_shift_is_invisible(self, own_a, cross_a, shift_a, shift_b):
        # intervals are same-clock differences, so shifting one node's
        # clock leaves both estimates bit-identical
        own_b, cross_b = own_a + 1.0, cross_a + 1.0
        beacon_a = SelectedBeacon(1, 0, 0.0, {1: own_a, 2: cross_b})
        beacon_b = SelectedBeacon(2, 0, 0.0, {1: cross_a, 2: own_b})
        shifted_a = SelectedBeacon(1, 0, 0.0, {1: own_a + shift_a, 2: cross_b + shift_b})
        shifted_b = SelectedBeacon(2, 0, 0.0, {1: cross_a + shift_a, 2: own_b + shift_b})
        base = pair_intervals(beacon_a, beacon_b)
        shifted = pair_intervals(shifted_a, shifted_b)
        assert base == shifted
        assert estimate_time_offset(base, 340.0) == estimate_time_offset(shifted, 340.0)

    def test_noiseless_simulation_is_exact(self):
        scenario = office_scenario(windows=1, seed=6, sep=0.25)
        observations, truth = simulate(scenario)
        window = window_observations(target_stream(observations, "p1"), 18.0)[0]
        selection = select_per_anchor(window)
        testbed = scenario.testbed
        emit = {(a, s): t for a, s, t in truth.emissions}
        for i in sorted(selection):
            for j in sorted(selection):
                if i == j:
                    continue
                pair = pair_intervals(selection[i], selection[j], 0.25, 0.25)
                true_offset = emit[(j, selection[j].seqno)] - emit[(i, selection[i].seqno)]
                true_dist = math.dist(truth.anchor_positions[i], truth.anchor_positions[j])
                c = testbed.speed_of_sound
                assert estimate_time_offset(pair, c) == pytest.approx(true_offset, rel=1e-9)
                assert estimate_anchor_distance(pair, c) == pytest.approx(true_dist, rel=1e-9)

    def test_missing_cross_reception_gives_none(self):
        beacon_a = SelectedBeacon(1, 0, 0.0, {1: 0.0})
        beacon_b = SelectedBeacon(2, 0, 0.0, {1: 0.05, 2: 1.0})
        assert pair_intervals(beacon_a, beacon_b) is None


def exact_line_testbed() -> TestbedConfig:
    """Integer-distance triangle with dyadic propagation delays (c = 256),
    so ranging errors come out exactly 0.0 and ties are exact."""
    anchors = [
        AnchorConfig(1, (0.0, 0.0)),
        AnchorConfig(2, (4.0, 3.0)),
        AnchorConfig(3, (8.0, 0.0)),
    ]
    return TestbedConfig(anchors, (-1.0, -1.0), (9.0, 4.0), speed_of_sound=256.0)


def exact_selection(testbed, bias=()):
    """Hand-built selection: emissions at integer times, physics arrivals.

    ``bias`` entries (src, recv, seconds) corrupt single cross receptions.
    """
    c = testbed.speed_of_sound
    positions = {a.anchor_id: a.position for a in testbed.anchors}
    emit = {a: float(k) for k, a in enumerate(sorted(positions))}
    selection = {}
    for src in sorted(positions):
        arrivals = {}
        for recv in sorted(positions):
            sep = 0.0 if recv == src else None
            arrivals[recv] = arrival_time(emit[src], positions[src], positions[recv], c,
                                          self_sep=sep)
        for b_src, b_recv, b_delay in bias:
            if b_src == src:
                arrivals[b_recv] += b_delay
        selection[src] = SelectedBeacon(src, 0, emit[src], arrivals)
    return selection


class TestOutlierOffsetDetection:
    def test_clean_data_ties_break_to_lowest_id(self):
        testbed = exact_line_testbed()
        offsets = detect_outlier_offsets(exact_selection(testbed), testbed, SolverParams())
        assert offsets.reference_id == 1
        assert offsets.valid_anchor_ids == {1, 2, 3}
        assert offsets.avg_ranging_error == 0.0
        assert offsets.offsets[1] == 0.0
        assert offsets.offsets[2] == 1.0  # emission-time offsets are exact here
        assert offsets.offsets[3] == 2.0

    def test_corrupted_pair_is_invalidated_for_both_references(self):
        scenario = office_scenario(
            windows=1, seed=2, noise=NoiseModel(nlos_bias={(2, 5): 0.005})
        )
        observations, _ = simulate(scenario)
        window = window_observations(target_stream(observations, "p1"), 18.0)[0]
        selection = select_per_anchor(window)
        errors = pairwise_ranging_errors(selection, scenario.testbed)
        over = {pair for pair, err in errors.items() if err > 0.5}
        assert over == {(2, 5), (5, 2)}
        # 5 ms on one cross reception -> half of c * 5ms ranging error
        assert errors[(2, 5)] == pytest.approx(343.0 * 0.005 / 2, rel=1e-6)
        offsets = detect_outlier_offsets(selection, scenario.testbed, SolverParams())
        assert offsets is not None
        if offsets.reference_id == 2:
            assert 5 not in offsets.valid_anchor_ids
        if offsets.reference_id == 5:
            assert 2 not in offsets.valid_anchor_ids

    def test_four_anchors_one_bad_pair_enumeration(self):
        testbed = TestbedConfig(
            [AnchorConfig(1, (0.0, 0.0)), AnchorConfig(2, (4.0, 3.0)),
             AnchorConfig(3, (8.0, 0.0)), AnchorConfig(4, (4.0, -3.0))],
            (-1.0, -4.0), (9.0, 4.0), speed_of_sound=256.0,
        )
        selection = exact_selection(testbed, bias=[(1, 2, 0.005)])
        errors = pairwise_ranging_errors(selection, testbed, None)
        assert {p for p, e in errors.items() if e > 0.5} == {(1, 2), (2, 1)}
        offsets = detect_outlier_offsets(selection, testbed, SolverParams())
        # every reference still qualifies (ref 1 keeps peers {3, 4} plus
        # itself) and all tie at exactly zero, so the lowest id wins and
        # the corrupted partner is excluded from the returned set
        assert offsets.reference_id == 1
        assert offsets.valid_anchor_ids == {1, 3, 4}
        assert offsets.avg_ranging_error == 0.0

    def test_three_anchors_one_bad_link_still_qualifies_via_clean_reference(self):
        # the reference itself counts toward the anchor minimum, so the
        # anchor outside the corrupted pair still qualifies with 2 peers
        testbed = exact_line_testbed()
        selection = exact_selection(testbed, bias=[(1, 2, 0.005)])
        offsets = detect_outlier_offsets(selection, testbed, SolverParams())
        assert offsets is not None
        assert offsets.reference_id == 3
        assert offsets.valid_anchor_ids == {1, 2, 3}

    def test_three_anchors_two_bad_links_give_nothing(self):
        testbed = exact_line_testbed()
        selection = exact_selection(testbed, bias=[(1, 2, 0.005), (1, 3, 0.005)])
        assert detect_outlier_offsets(selection, testbed, SolverParams()) is None

    def test_explicit_ground_truth_distances_are_honored(self):
        testbed = exact_line_testbed()
        selection = exact_selection(testbed)
        # claim the 1-2 distance is 9 m: the genuinely clean pair now looks corrupt
        fake = {(1, 2): 9.0, (1, 3): 8.0, (2, 3): 5.0}
        errors = pairwise_ranging_errors(selection, testbed, fake)
        assert errors[(1, 2)] == 4.0
        offsets = detect_outlier_offsets(selection, testbed, SolverParams(), fake)
        assert offsets.reference_id == 3
