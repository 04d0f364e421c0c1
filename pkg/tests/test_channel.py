import math
import random
import statistics

import pytest

from hapticsim.channel import (
    CapacityMode,
    Channel,
    ChannelConfig,
    Delivered,
    Dropped,
    DropReason,
)


def test_zero_jitter_is_pure_fixed_delay():
    ch = Channel(ChannelConfig(base_delay_ms=30.0), seed=1)
    assert all(ch.sample_delay() == 30.0 for _ in range(100))


def test_transmit_pure_delay():
    ch = Channel(ChannelConfig(base_delay_ms=10.0), seed=1)
    res = ch.transmit(100, now_ms=5.0)
    assert isinstance(res, Delivered)
    assert res.at_ms == 15.0


def test_delay_sample_statistics():
    ch = Channel(ChannelConfig(base_delay_ms=30.0, jitter_stddev_ms=5.0), seed=42)
    draws = [ch.sample_delay() for _ in range(100_000)]
    assert 29.9 <= statistics.fmean(draws) <= 30.2
    assert 4.85 <= statistics.stdev(draws) <= 5.15
    assert min(draws) >= 0.0


def test_certain_loss_always_drops():
    ch = Channel(ChannelConfig(loss_prob=1.0), seed=3)
    for _ in range(100):
        res = ch.transmit(100, 0.0)
        assert isinstance(res, Dropped) and res.reason is DropReason.LOSS


def test_loss_fraction_matches_probability():
    ch = Channel(ChannelConfig(loss_prob=0.1), seed=7)
    n = 100_000
    dropped = sum(
        isinstance(ch.transmit(100, t * 0.1), Dropped) for t in range(n))
    assert 0.094 <= dropped / n <= 0.106
    assert ch.dropped_loss == dropped


def test_identical_seeds_identical_sequences():
    cfg = ChannelConfig(base_delay_ms=20.0, jitter_stddev_ms=4.0, loss_prob=0.2)
    a, b = Channel(cfg, seed=99), Channel(cfg, seed=99)
    for t in range(2_000):
        assert a.transmit(80, float(t)) == b.transmit(80, float(t))
    assert a.counters() == b.counters()


def test_queue_mode_serialization_schedule():
    # 100 bytes at 80 kbps serialize in exactly 10 ms; back-to-back packets
    # leave the queue one serialization slot apart.
    cfg = ChannelConfig(base_delay_ms=3.0, capacity_bps=80_000.0,
                        capacity_mode=CapacityMode.QUEUE)
    ch = Channel(cfg, seed=0)
    for k in range(10):
        res = ch.transmit(100, 0.0)
        assert isinstance(res, Delivered)
        assert math.isclose(res.at_ms, (k + 1) * 10.0 + 3.0)


def test_queue_mode_overflow_drops():
    cfg = ChannelConfig(capacity_bps=80_000.0, capacity_mode=CapacityMode.QUEUE,
                        max_queue_ms=25.0)
    ch = Channel(cfg, seed=0)
    results = [ch.transmit(100, 0.0) for _ in range(6)]
    delivered = [r for r in results if isinstance(r, Delivered)]
    dropped = [r for r in results if isinstance(r, Dropped)]
    assert len(delivered) == 3  # queue admits 0, 10, 20 ms of backlog
    assert all(r.reason is DropReason.CAPACITY for r in dropped)
    assert ch.dropped_capacity == 3


def test_drop_mode_token_bucket():
    cfg = ChannelConfig(capacity_bps=80_000.0, capacity_mode=CapacityMode.DROP,
                        bucket_bytes=1000.0)
    ch = Channel(cfg, seed=0)
    results = [ch.transmit(100, 0.0) for _ in range(11)]
    assert sum(isinstance(r, Delivered) for r in results) == 10
    assert isinstance(results[-1], Dropped)
    assert results[-1].reason is DropReason.CAPACITY
    # 10 ms of refill buys one more 100-byte packet at 10 kB/s
    assert isinstance(ch.transmit(100, 10.0), Delivered)
    assert isinstance(ch.transmit(100, 10.0), Dropped)


def test_conservation_under_mixed_impairments():
    cfg = ChannelConfig(base_delay_ms=5.0, jitter_stddev_ms=2.0, loss_prob=0.3,
                        capacity_bps=200_000.0, capacity_mode=CapacityMode.DROP,
                        bucket_bytes=600.0)
    ch = Channel(cfg, seed=11)
    rng = random.Random(5)
    for _ in range(20_000):
        ch.transmit(rng.randrange(40, 200), rng.random() * 1000.0)
    c = ch.counters()
    assert c["offered"] == c["delivered"] + c["dropped_loss"] + c["dropped_capacity"]
    assert c["offered"] == 20_000


def test_no_time_travel():
    cfg = ChannelConfig(base_delay_ms=1.0, jitter_stddev_ms=50.0)
    ch = Channel(cfg, seed=13)
    for t in range(5_000):
        res = ch.transmit(60, float(t))
        assert res.at_ms >= float(t)


def test_zero_impairment_channel_is_identity_shift():
    ch = Channel(ChannelConfig(base_delay_ms=7.5), seed=0)
    schedule = [0.0, 1.0, 2.5, 100.0]
    out = [ch.transmit(100, t) for t in schedule]
    assert [r.at_ms for r in out] == [t + 7.5 for t in schedule]
    assert ch.counters()["delivered"] == len(schedule)


def test_counters_never_decrease_and_bytes_tracked():
    ch = Channel(ChannelConfig(loss_prob=0.5), seed=2)
    last = ch.counters()
    for t in range(1_000):
        ch.transmit(100, float(t))
        cur = ch.counters()
        assert all(cur[k] >= last[k] for k in cur)
        last = cur
    assert last["offered_bytes"] == 100 * 1_000


@pytest.mark.parametrize("kwargs", [
    {"base_delay_ms": -1.0},
    {"jitter_stddev_ms": -0.1},
    {"loss_prob": 1.5},
    {"loss_prob": -0.1},
    {"capacity_bps": 0.0},
    {"max_queue_ms": -5.0},
    {"bucket_bytes": 0.0},
])
def test_invalid_config_rejected(kwargs):
    with pytest.raises(ValueError):
        ChannelConfig(**kwargs)


def test_zero_byte_packet_rejected():
    ch = Channel(ChannelConfig(), seed=0)
    with pytest.raises(ValueError):
        ch.transmit(0, 0.0)
