import pytest
from hypothesis import given
from hypothesis import strategies as st

from beaconloc import BeaconObservation, NoiseModel, simulate
from beaconloc.formats import (
    FixRecord,
    ParseError,
    fix_line,
    format_fixes,
    format_observations,
    format_scenario,
    format_testbed,
    format_truth,
    parse_fixes,
    parse_observations,
    parse_scenario,
    parse_testbed,
    parse_truth,
)
from conftest import office_scenario


class TestObservations:
    def test_documented_example_line(self):
        parsed = parse_observations("OBS anchor 3 src 3 seq 41 ts 12.000125\n")
        assert parsed == [BeaconObservation(3, "anchor", 3, 41, 12.000125)]

    def test_empty_file(self):
        assert parse_observations("") == []

    def test_comments_and_blanks_ignored(self):
        text = "# header\n\nOBS target p1 src 2 seq 0 ts 1.500000000\n"
        assert len(parse_observations(text)) == 1

    def test_simulated_records_roundtrip_at_nanosecond_precision(self):
        noise = NoiseModel(jitter_sigma=20e-6, clock_offset={"p1": -40.25, 3: 17.5})
        observations, _ = simulate(office_scenario(windows=45, seed=20, noise=noise))
        assert len(observations) >= 10_000
        text = format_observations(observations)
        parsed = parse_observations(text)
        assert len(parsed) == len(observations)
        for a, b in zip(observations, parsed):
            assert (a.receiver_id, a.receiver_kind, a.source_id, a.seqno) == (
                b.receiver_id, b.receiver_kind, b.source_id, b.seqno)
            assert abs(a.timestamp - b.timestamp) <= 0.5e-9

    def test_write_parse_is_a_projection(self):
        observations, _ = simulate(
            office_scenario(windows=1, seed=21, noise=NoiseModel(jitter_sigma=20e-6)))
        once = parse_observations(format_observations(observations))
        twice = parse_observations(format_observations(once))
        assert once == twice

    @given(st.integers(min_value=-(10**12), max_value=10**12))
    def test_nanosecond_values_roundtrip_bit_exact(self, nanos):
        obs = BeaconObservation("t", "target", 1, 0, nanos / 1e9)
        assert parse_observations(format_observations([obs])) == [obs]

    @pytest.mark.parametrize("line,field", [
        ("OBS anchor 3 src 3 seq 41", "structure"),
        ("OBS anchor 3 src 3 seq 41 ts notanumber", "ts"),
        ("OBS anchor 3 src 3 seq 4.5 ts 1.0", "seq"),
        ("OBS anchor x src 3 seq 41 ts 1.0", "receiver"),
        ("OBS listener 3 src 3 seq 41 ts 1.0", "kind"),
        ("OBS anchor 3 src 3 seq 41 ts 1e-3", "ts"),  # exponents are not valid here
        ("OBS anchor 3 src 3 seq 41 ts nan", "ts"),
        ("FOO anchor 3 src 3 seq 41 ts 1.0", "keyword"),
    ])
    def test_malformed_lines_name_line_and_field(self, line, field):
        with pytest.raises(ParseError) as err:
            parse_observations("OBS target p1 src 2 seq 0 ts 1.5\n" + line + "\n")
        assert err.value.line_number == 2
        assert err.value.field == field


class TestTestbedFormat:
    def test_roundtrip(self):
        testbed = office_scenario().testbed
        assert parse_testbed(format_testbed(testbed)) == testbed

    def test_3d_anchor_roundtrip(self):
        scenario = office_scenario()
        text = format_testbed(scenario.testbed).replace(
            "anchor id 1 x 0.300000000 y 0.300000000",
            "anchor id 1 x 0.300000000 y 0.300000000 z 2.500000000")
        parsed = parse_testbed(text)
        assert parsed.anchor(1).position == (0.3, 0.3, 2.5)

    def test_unknown_keyword_rejected(self):
        testbed = office_scenario().testbed
        with pytest.raises(ParseError):
            parse_testbed(format_testbed(testbed) + "duration 5\n")

    def test_missing_dimension_rejected(self):
        with pytest.raises(ParseError) as err:
            parse_testbed("bounds min 0 0 max 1 1\nanchor id 1 x 0.5 y 0.5\n")
        assert err.value.field == "dimension"


class TestScenarioFormat:
    def test_roundtrip(self):
        noise = NoiseModel(jitter_sigma=2e-5, miss_prob=0.125,
                           nlos_bias={(3, "p1"): 0.003, (2, 5): 0.005},
                           clock_offset={"p1": -40.25, 4: 17.5})
        scenario = office_scenario(windows=2, seed=77, noise=noise)
        assert parse_scenario(format_scenario(scenario)) == scenario

    def test_numeric_node_tokens_mean_anchors(self):
        scenario = office_scenario(noise=NoiseModel(nlos_bias={(2, 5): 0.004}))
        parsed = parse_scenario(format_scenario(scenario))
        assert parsed.noise.nlos_bias == {(2, 5): 0.004}
        assert isinstance(next(iter(parsed.noise.nlos_bias))[1], int)

    def test_defaults_fill_in(self):
        text = (
            "dimension 2\nbounds min 0 0 max 10 10\n"
            "anchor id 1 x 1 y 1\nanchor id 2 x 9 y 1\nanchor id 3 x 5 y 9\n"
            "duration 30\n"
        )
        scenario = parse_scenario(text)
        assert scenario.seed == 0
        assert scenario.schedule.slot_length == 1.0
        assert scenario.testbed.speed_of_sound == 343.0


class TestFixFormat:
    def test_roundtrip(self):
        records = [
            FixRecord("p1", 0.012345678, (3.2, 2.4), (1, 2, 3, 4), 1.25e-07),
            FixRecord("p2", 18.012345678, (7.1, 5.0, 1.5), (2, 3, 5), 0.0),
        ]
        assert parse_fixes(format_fixes(records)) == records

    def test_line_shape(self):
        line = fix_line(FixRecord("p1", 0.5, (3.2, 2.4), (1, 2, 3), 0.001))
        assert line == ("FIX target p1 window 0.500000000 x 3.200000000 "
                        "y 2.400000000 anchors 1,2,3 rms 0.001000000")

    def test_malformed_rejected(self):
        with pytest.raises(ParseError):
            parse_fixes("FIX target p1 window 0.5 x 1.0 anchors 1,2,3 rms 0.0\n")


class TestTruthFormat:
    def test_roundtrip(self):
        positions = {"p1": (3.2, 2.4), "p2": (7.1, 5.0, 1.5)}
        assert parse_truth(format_truth(positions)) == positions

    def test_wrong_keyword_rejected(self):
        with pytest.raises(ParseError):
            parse_truth("FIX target p1 x 1.0 y 2.0\n")
