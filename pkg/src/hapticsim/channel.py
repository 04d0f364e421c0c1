"""Simulated unidirectional link: fixed delay, jitter, random loss, and a
capacity limit, all drawn deterministically from a seed.

A packet passes three stages in order: capacity (token bucket in DROP mode,
a serialization queue in QUEUE mode), then an independent loss coin, then
the delay draw.  Independent delay draws mean two packets may arrive out of
order; receivers must tolerate that.
"""

from __future__ import annotations

import enum
import math
import random
from dataclasses import dataclass


class CapacityMode(enum.Enum):
    DROP = "DROP"    # UDP-like: excess packets are discarded
    QUEUE = "QUEUE"  # TCP-like: excess packets wait, adding queueing delay


class DropReason(enum.Enum):
    LOSS = "LOSS"
    CAPACITY = "CAPACITY"


@dataclass(frozen=True, slots=True)
class Delivered:
    at_ms: float


@dataclass(frozen=True, slots=True)
class Dropped:
    reason: DropReason


TransmitResult = Delivered | Dropped


@dataclass(frozen=True)
class ChannelConfig:
    """Link impairment parameters.

    ``capacity_bps`` of None means unlimited.  ``jitter_stddev_ms`` is the
    standard deviation of a zero-mean normal added to the base delay and
    clamped at zero; with jitter, loss and capacity all off the channel is a
    pure fixed delay.
    """

    base_delay_ms: float = 0.0
    jitter_stddev_ms: float = 0.0
    loss_prob: float = 0.0
    capacity_bps: float | None = None
    capacity_mode: CapacityMode = CapacityMode.DROP
    max_queue_ms: float = 1000.0      # QUEUE mode: backlog beyond this overflows
    bucket_bytes: float | None = None  # DROP mode burst size; default 100 ms of capacity
    seed: int = 0

    def __post_init__(self):
        if self.base_delay_ms < 0 or not math.isfinite(self.base_delay_ms):
            raise ValueError("base_delay_ms must be >= 0")
        if self.jitter_stddev_ms < 0 or not math.isfinite(self.jitter_stddev_ms):
            raise ValueError("jitter_stddev_ms must be >= 0")
        if not (0.0 <= self.loss_prob <= 1.0):
            raise ValueError("loss_prob must be in [0, 1]")
        if self.capacity_bps is not None and not self.capacity_bps > 0:
            raise ValueError("capacity_bps must be positive or None")
        if not isinstance(self.capacity_mode, CapacityMode):
            raise ValueError("capacity_mode must be a CapacityMode")
        if self.max_queue_ms < 0:
            raise ValueError("max_queue_ms must be >= 0")
        if self.bucket_bytes is not None and not self.bucket_bytes > 0:
            raise ValueError("bucket_bytes must be positive or None")


class Channel:
    """Single-owner link instance; mutated only by the simulation loop."""

    def __init__(self, cfg: ChannelConfig, seed: int | None = None):
        self.cfg = cfg
        self._rng = random.Random(cfg.seed if seed is None else seed)
        self.offered = 0
        self.delivered = 0
        self.dropped_loss = 0
        self.dropped_capacity = 0
        self.offered_bytes = 0
        self.delivered_bytes = 0
        self._queue_busy_until_ms = 0.0
        if cfg.capacity_bps is not None:
            default_bucket = cfg.capacity_bps / 8.0 * 0.1  # 100 ms worth of bytes
            self._bucket_size = cfg.bucket_bytes if cfg.bucket_bytes is not None else default_bucket
            self._tokens = self._bucket_size
        else:
            self._bucket_size = 0.0
            self._tokens = 0.0
        self._last_refill_ms = 0.0

    def sample_delay(self) -> float:
        """One delay draw in ms: max(0, base + N(0, jitter^2)).

        With jitter zero this is exactly the base delay and consumes no
        randomness, so seeds line up between jittered and clean runs.
        """
        delay = self.cfg.base_delay_ms
        if self.cfg.jitter_stddev_ms > 0:
            delay += self._rng.gauss(0.0, self.cfg.jitter_stddev_ms)
        return max(0.0, delay)

    def _capacity_stage(self, pkt_bytes: int, now_ms: float) -> float | None:
        """Return added delay in ms, or None if the packet is shed."""
        cfg = self.cfg
        if cfg.capacity_bps is None:
            return 0.0
        serialization_ms = pkt_bytes * 8000.0 / cfg.capacity_bps
        if cfg.capacity_mode is CapacityMode.QUEUE:
            wait = max(0.0, self._queue_busy_until_ms - now_ms)
            if wait > cfg.max_queue_ms:
                return None
            self._queue_busy_until_ms = now_ms + wait + serialization_ms
            return wait + serialization_ms
        # DROP: token bucket in bytes, refilled continuously
        if now_ms > self._last_refill_ms:
            refill = (now_ms - self._last_refill_ms) / 1000.0 * cfg.capacity_bps / 8.0
            self._tokens = min(self._bucket_size, self._tokens + refill)
            self._last_refill_ms = now_ms
        if self._tokens < pkt_bytes:
            return None
        self._tokens -= pkt_bytes
        return serialization_ms

    def transmit(self, pkt_bytes: int, now_ms: float) -> TransmitResult:
        """Offer one packet; decide its fate immediately.

        Counters are final at offer time, so offered equals delivered plus
        drops at any instant, not just after draining.
        """
        if pkt_bytes <= 0:
            raise ValueError("pkt_bytes must be positive")
        self.offered += 1
        self.offered_bytes += pkt_bytes
        extra = self._capacity_stage(pkt_bytes, now_ms)
        if extra is None:
            self.dropped_capacity += 1
            return Dropped(DropReason.CAPACITY)
        if self.cfg.loss_prob > 0 and self._rng.random() < self.cfg.loss_prob:
            self.dropped_loss += 1
            return Dropped(DropReason.LOSS)
        self.delivered += 1
        self.delivered_bytes += pkt_bytes
        return Delivered(now_ms + extra + self.sample_delay())

    def counters(self) -> dict[str, int]:
        return {
            "offered": self.offered,
            "delivered": self.delivered,
            "dropped_loss": self.dropped_loss,
            "dropped_capacity": self.dropped_capacity,
            "offered_bytes": self.offered_bytes,
            "delivered_bytes": self.delivered_bytes,
        }
