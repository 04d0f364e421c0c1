import pytest

from hapticsim.channel import CapacityMode
from hapticsim.scenario_io import (
    ScenarioError,
    parse_scenario,
    serialize_scenario,
    standard_scenario,
    standard_scenario_text,
)

MINIMAL = "[run]\nduration_s = 1\n"


class TestParsing:
    def test_minimal_file_takes_defaults(self):
        sc = parse_scenario(MINIMAL)
        assert sc.duration_s == 1.0
        assert sc.seed == 1
        assert sc.tick_rate_hz == 1000
        assert sc.n_clients == 2
        assert sc.n_cubes == 1
        assert sc.quantizer.quantum == 0.0001
        assert sc.quantizer.decimals == 12
        assert sc.c2s[0].capacity_bps is None
        assert sc.c2s[0].capacity_mode is CapacityMode.DROP
        assert not sc.compensation.predictor_enabled

    def test_comments_and_blank_lines_ignored(self):
        sc = parse_scenario("# header\n\n[run]\n# inline note\nduration_s = 2\n")
        assert sc.duration_s == 2.0

    def test_out_of_range_value_names_key_and_line(self):
        text = "[run]\nduration_s = 1\n[channel.s2c]\nloss_prob = 1.5\n"
        with pytest.raises(ScenarioError) as err:
            parse_scenario(text)
        assert "loss_prob" in str(err.value)
        assert "line 4" in str(err.value)

    def test_unknown_key_rejected(self):
        with pytest.raises(ScenarioError) as err:
            parse_scenario("[run]\nduration_s = 1\nbogus = 3\n")
        assert "bogus" in str(err.value)
        assert "line 3" in str(err.value)

    def test_unknown_section_rejected(self):
        with pytest.raises(ScenarioError) as err:
            parse_scenario("[nacho]\n")
        assert "nacho" in str(err.value)

    def test_content_before_section_rejected(self):
        with pytest.raises(ScenarioError):
            parse_scenario("duration_s = 1\n")

    def test_bad_waypoint_field_count(self):
        text = MINIMAL + "[trajectory.client1]\n0 1 2\n"
        with pytest.raises(ScenarioError) as err:
            parse_scenario(text)
        assert "4 numbers" in str(err.value)

    def test_waypoint_times_must_increase(self):
        text = MINIMAL + "[trajectory.client1]\n0 0 0 0\n0 1 0 0\n"
        with pytest.raises(ScenarioError):
            parse_scenario(text)

    def test_client2_requires_client1(self):
        text = MINIMAL + "[trajectory.client2]\n0 0 0 0\n"
        with pytest.raises(ScenarioError):
            parse_scenario(text)

    def test_single_client_scenario(self):
        text = MINIMAL + "[trajectory.client1]\n0 0.5 0 0.25\n"
        sc = parse_scenario(text)
        assert sc.n_clients == 1
        assert len(sc.c2s) == 1

    def test_section_order_insensitive(self):
        a = parse_scenario("[quantizer]\nquantum = 0.001\ndecimals = 4\n" + MINIMAL)
        b = parse_scenario(MINIMAL + "[quantizer]\nquantum = 0.001\ndecimals = 4\n")
        assert a == b

    def test_capacity_and_mode_values(self):
        text = MINIMAL + "[channel.c2s]\ncapacity_bps = 80000\ncapacity_mode = QUEUE\n"
        sc = parse_scenario(text)
        assert sc.c2s[0].capacity_bps == 80000.0
        assert sc.c2s[0].capacity_mode is CapacityMode.QUEUE

    def test_cubes_section(self):
        text = MINIMAL + "[cubes]\n0.1 0.2 0.25 0\n-0.5 0 0.25 1.5\n"
        sc = parse_scenario(text)
        assert sc.n_cubes == 2
        assert sc.cubes[1][1] == 1.5


class TestOverrides:
    def test_override_applies(self):
        sc = parse_scenario(MINIMAL, overrides=["quantizer.quantum=0.001"])
        assert sc.quantizer.quantum == 0.001

    def test_overrides_compose_left_to_right(self):
        sc = parse_scenario(MINIMAL, overrides=["run.seed=3", "run.seed=9"])
        assert sc.seed == 9

    def test_override_validation(self):
        with pytest.raises(ScenarioError):
            parse_scenario(MINIMAL, overrides=["channel.s2c.loss_prob=2.0"])

    @pytest.mark.parametrize("bad", [
        "nosuchsection.key=1",
        "run.bogus=1",
        "malformed",
        "run=1",
    ])
    def test_bad_override_rejected(self, bad):
        with pytest.raises(ScenarioError):
            parse_scenario(MINIMAL, overrides=[bad])


class TestRoundTrip:
    def test_standard_scenario_round_trips(self):
        sc = parse_scenario(standard_scenario_text())
        again = parse_scenario(serialize_scenario(sc))
        assert again == sc

    def test_round_trip_with_overrides(self):
        sc = standard_scenario(overrides=["quantizer.quantum=0.001",
                                          "compensation.fec_redundancy=3"])
        again = parse_scenario(serialize_scenario(sc))
        assert again == sc

    def test_standard_scenario_shape(self):
        sc = standard_scenario()
        assert sc.duration_s == 120.0
        assert sc.n_clients == 2
        assert sc.n_cubes == 3
        assert sc.interval_s == 10.0
        assert sc.compensation.reliable_key_events
