import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hapticsim.statemodel import (
    EncodingOverflowError,
    QuantizerConfig,
    UpdateKind,
    UpdatePacket,
    Vec3,
    WireFormatError,
    decode_packet,
    encode_packet,
    packet_size,
    quantize,
    should_transmit,
)


class TestQuantize:
    def test_zero(self):
        assert quantize(0.0, 0.0001) == 0.0

    def test_round_half_away(self):
        assert quantize(0.12347, 0.0001) == 0.1235

    def test_tie_rounds_away_from_zero(self):
        assert quantize(-0.00015, 0.0001) == -0.0002
        assert quantize(0.00015, 0.0001) == 0.0002

    @pytest.mark.parametrize("bad", [float("nan"), float("inf"), float("-inf")])
    def test_non_finite_value_rejected(self, bad):
        with pytest.raises(ValueError):
            quantize(bad, 0.0001)

    @pytest.mark.parametrize("bad_q", [0.0, -0.1, float("nan")])
    def test_bad_quantum_rejected(self, bad_q):
        with pytest.raises(ValueError):
            quantize(1.0, bad_q)

    @given(
        value=st.floats(min_value=-99.0, max_value=99.0,
                        allow_nan=False, allow_infinity=False),
        quantum=st.sampled_from([0.0001, 0.001, 0.01, 0.25, 1.0, 0.0003]),
    )
    def test_idempotent(self, value, quantum):
        once = quantize(value, quantum)
        assert quantize(once, quantum) == once


class TestShouldTransmit:
    def test_same_cell_suppressed(self):
        assert not should_transmit(
            Vec3(0.1234, 0, 0), Vec3(0.12341, 0, 0), 0.0001)

    def test_cell_boundary_crossed(self):
        assert should_transmit(
            Vec3(0.1234, 0, 0), Vec3(0.12347, 0, 0), 0.0001)

    def test_any_component_triggers(self):
        assert should_transmit(Vec3(0, 0, 0), Vec3(0, 0, 0.001), 0.0001)

    def test_straight_line_send_count(self):
        # Brute-force replay of a 0.1-unit straight line sampled at 1 kHz:
        # the dead-band protocol sends about once per cell crossed.
        quantum = 0.001
        samples = [Vec3(0.1 * k / 1000.0, 0.0, 0.0) for k in range(1001)]
        last = Vec3(quantize(samples[0].x, quantum), 0.0, 0.0)
        sends = 0
        for cur in samples[1:]:
            if should_transmit(last, cur, quantum):
                sends += 1
                last = Vec3(quantize(cur.x, quantum),
                            quantize(cur.y, quantum),
                            quantize(cur.z, quantum))
        cells_crossed = abs(
            round(samples[-1].x / quantum) - round(samples[0].x / quantum))
        assert abs(sends - cells_crossed) <= 1
        assert abs(sends - 100) <= 1

    @given(st.data())
    @settings(max_examples=30, deadline=None)
    def test_coarser_quantum_never_sends_more(self, data):
        # Waypoint scripts on a 0.01 grid, sampled at 1 kHz: the dead-band
        # count at quantum 1/1000 never exceeds the count at 1/10000.
        n_points = data.draw(st.integers(min_value=2, max_value=5))
        coords = data.draw(st.lists(
            st.integers(min_value=-30, max_value=30).map(lambda k: k * 0.01),
            min_size=3 * n_points, max_size=3 * n_points))
        waypoints = []
        for i in range(n_points):
            waypoints.append((i * 200, Vec3(*coords[3 * i:3 * i + 3])))
        samples = []
        for t in range(0, waypoints[-1][0] + 1):
            seg = 0
            while seg + 1 < len(waypoints) and waypoints[seg + 1][0] <= t:
                seg += 1
            if seg + 1 == len(waypoints):
                samples.append(waypoints[-1][1])
                continue
            (t0, p0), (t1, p1) = waypoints[seg], waypoints[seg + 1]
            f = (t - t0) / (t1 - t0)
            samples.append(Vec3(p0.x + (p1.x - p0.x) * f,
                                p0.y + (p1.y - p0.y) * f,
                                p0.z + (p1.z - p0.z) * f))

        def count(quantum):
            last = Vec3(quantize(samples[0].x, quantum),
                        quantize(samples[0].y, quantum),
                        quantize(samples[0].z, quantum))
            sends = 0
            for cur in samples[1:]:
                if should_transmit(last, cur, quantum):
                    sends += 1
                    last = Vec3(quantize(cur.x, quantum),
                                quantize(cur.y, quantum),
                                quantize(cur.z, quantum))
            return sends

        assert count(0.001) <= count(0.0001)


class TestQuantizerConfig:
    def test_defaults_valid(self):
        QuantizerConfig()
        QuantizerConfig(quantum=0.001, decimals=4)

    def test_wire_coarser_than_quantum_rejected(self):
        with pytest.raises(ValueError):
            QuantizerConfig(quantum=0.0001, decimals=3)

    @pytest.mark.parametrize("kwargs", [
        {"quantum": 0.0},
        {"quantum": -1.0},
        {"decimals": 0},
        {"decimals": 16},
    ])
    def test_out_of_range_rejected(self, kwargs):
        with pytest.raises(ValueError):
            QuantizerConfig(**{"quantum": 0.1, "decimals": 12, **kwargs})


def _hip(values, seq=12, t=1234):
    return UpdatePacket(UpdateKind.HIP_POS, seq, t, 1, 0, tuple(values))


def _cube(values, seq=3, t=1234):
    return UpdatePacket(UpdateKind.CUBE_POSE, seq, t, 0, 2, tuple(values))


class TestEncode:
    def test_coordinate_field_format(self):
        wire = encode_packet(_hip((0.1, -0.25, 1.0)), 4).decode()
        assert wire == "HIPP;00000012;0000001234;01;00;+00.1000;-00.2500;+01.0000\n"

    def test_pose_is_100_bytes_at_12_decimals(self):
        assert len(encode_packet(_cube((0.1, -0.25, 1.0, 0.25)), 12)) == 100
        assert packet_size(UpdateKind.CUBE_POSE, 12) == 100

    def test_reduced_width_sizes(self):
        assert packet_size(UpdateKind.CUBE_POSE, 4) == 68
        assert packet_size(UpdateKind.HIP_POS, 4) == 58
        assert packet_size(UpdateKind.HIP_POS, 12) == 82

    @pytest.mark.parametrize("kind,n_scalars", [
        (UpdateKind.HIP_POS, 3),
        (UpdateKind.CUBE_POSE, 4),
    ])
    def test_eight_bytes_saved_per_scalar(self, kind, n_scalars):
        assert (packet_size(kind, 12) - packet_size(kind, 4)) == 8 * n_scalars

    def test_size_pure_function_of_kind_and_decimals(self):
        for decimals in range(1, 16):
            for kind, values, aux in [
                (UpdateKind.HIP_POS, (1.5, -2.25, 0.0), None),
                (UpdateKind.CUBE_POSE, (1.5, -2.25, 0.0, 3.125), None),
                (UpdateKind.KEY_EVENT, (), 1),
                (UpdateKind.ACK, (), 77),
            ]:
                pkt = UpdatePacket(kind, 5, 99, 2, 1, values, aux)
                assert len(encode_packet(pkt, decimals)) == packet_size(kind, decimals)

    def test_truncates_excess_precision_toward_zero(self):
        wire = encode_packet(_hip((0.12347, -0.12347, 0.0)), 4).decode()
        assert "+00.1234" in wire and "-00.1234" in wire

    def test_workspace_overflow_rejected(self):
        with pytest.raises(EncodingOverflowError):
            encode_packet(_hip((100.0, 0, 0)), 4)

    def test_rotation_field_allows_accumulated_angles(self):
        wire = encode_packet(_cube((0, 0, 0, 123.5)), 4).decode()
        assert "+123.5000" in wire
        with pytest.raises(EncodingOverflowError):
            encode_packet(_cube((0, 0, 0, 1000.0)), 4)

    def test_key_event_and_ack_layout(self):
        key = UpdatePacket(UpdateKind.KEY_EVENT, 1, 500, 1, 2, (), aux=1)
        assert encode_packet(key, 12) == b"KEYE;00000001;0000000500;01;02;00000001\n"
        ack = UpdatePacket(UpdateKind.ACK, 2, 501, 0, 2, (), aux=1)
        assert encode_packet(ack, 12) == b"ACK_;00000002;0000000501;00;02;00000001\n"


class TestDecode:
    def test_round_trip_identity(self):
        for pkt in [
            _hip((0.1, -0.25, 1.0)),
            _cube((0.1234, -0.25, 1.0, -3.1415)),
            UpdatePacket(UpdateKind.KEY_EVENT, 9, 88, 2, 0, (), aux=2),
            UpdatePacket(UpdateKind.ACK, 10, 89, 0, 0, (), aux=9),
        ]:
            assert decode_packet(encode_packet(pkt, 12)) == pkt

    def test_truncated_packet_rejected(self):
        wire = encode_packet(_hip((0.1, -0.25, 1.0)), 4)
        with pytest.raises(WireFormatError):
            decode_packet(wire[: len(wire) // 2])

    @pytest.mark.parametrize("mutate,offset_min", [
        (lambda w: b"XXXX" + w[4:], 0),                 # unknown tag
        (lambda w: w[:5] + b"A" + w[6:], 5),            # non-digit seq
        (lambda w: w[:4] + b":" + w[5:], 4),            # bad separator
        (lambda w: w[:-1] + b"x\n", 0),                 # trailing junk
    ])
    def test_malformed_points_at_offset(self, mutate, offset_min):
        wire = mutate(encode_packet(_hip((0.1, -0.25, 1.0)), 4))
        with pytest.raises(WireFormatError) as err:
            decode_packet(wire)
        assert err.value.offset >= offset_min

    def test_fuzz_round_trip(self):
        rng = random.Random(0xC0DEC)
        kinds = list(UpdateKind)
        for _ in range(10_000):
            decimals = rng.choice((4, 12))
            kind = rng.choice(kinds)
            if kind is UpdateKind.HIP_POS:
                values = tuple(rng.randrange(-10 ** (decimals + 2) + 1,
                                             10 ** (decimals + 2)) / 10 ** decimals
                               for _ in range(3))
                aux = None
            elif kind is UpdateKind.CUBE_POSE:
                values = tuple(rng.randrange(-10 ** (decimals + 2) + 1,
                                             10 ** (decimals + 2)) / 10 ** decimals
                               for _ in range(3))
                values += (rng.randrange(-10 ** (decimals + 3) + 1,
                                         10 ** (decimals + 3)) / 10 ** decimals,)
                aux = None
            else:
                values = ()
                aux = rng.randrange(0, 10 ** 8)
            pkt = UpdatePacket(kind, rng.randrange(10 ** 8),
                               rng.randrange(10 ** 10), rng.randrange(100),
                               rng.randrange(100), values, aux)
            wire = encode_packet(pkt, decimals)
            assert len(wire) == packet_size(kind, decimals)
            assert decode_packet(wire) == pkt


class TestUpdatePacket:
    def test_value_count_enforced(self):
        with pytest.raises(ValueError):
            UpdatePacket(UpdateKind.HIP_POS, 0, 0, 1, 0, (1.0, 2.0))

    def test_aux_required_for_key_events(self):
        with pytest.raises(ValueError):
            UpdatePacket(UpdateKind.KEY_EVENT, 0, 0, 1, 0, ())
        with pytest.raises(ValueError):
            UpdatePacket(UpdateKind.HIP_POS, 0, 0, 1, 0, (1.0, 2.0, 3.0), aux=1)

    def test_negative_fields_rejected(self):
        with pytest.raises(ValueError):
            UpdatePacket(UpdateKind.HIP_POS, -1, 0, 1, 0, (1.0, 2.0, 3.0))


class TestVec3:
    def test_arithmetic(self):
        a, b = Vec3(1, 2, 3), Vec3(0.5, -2, 1)
        assert a + b == Vec3(1.5, 0, 4)
        assert a - b == Vec3(0.5, 4, 2)
        assert a.scaled(2) == Vec3(2, 4, 6)
        assert math.isclose(Vec3(3, 4, 0).norm(), 5.0)
        assert math.isclose(a.distance_to(a), 0.0)
