"""Impairment concealment techniques, each independently switchable:
duplicate-copy redundancy for loss, a receiver smoothing buffer for jitter,
linear dead-reckoning for gaps, render-lag equalization across clients,
retransmission of key events, and delay-adaptive force rendering.

With every knob at its default the whole pipeline is a pass-through.
"""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field

from .statemodel import UpdatePacket, Vec3

DEDUP_WINDOW = 1024


@dataclass(frozen=True)
class CompensationConfig:
    smoothing_lag_ms: float = 0.0          # 0 = no smoothing buffer
    fec_redundancy: int = 1                # copies per update; 1 = off
    predictor_enabled: bool = False
    # Silence longer than this reads as the sender's dead-band going quiet,
    # not as loss, so extrapolation stops; None = extrapolate forever.
    predictor_horizon_ms: float | None = 3.0
    delay_equalization_enabled: bool = False
    reliable_key_events: bool = False
    rto_ms: float = 50.0
    max_retries: int = 3
    stiffness_k0: float = 300.0            # force units per unit penetration
    stiffness_alpha: float = 10.0          # stiffness decay per second of round trip
    damping_b: float = 0.0

    def __post_init__(self):
        if self.smoothing_lag_ms < 0:
            raise ValueError("smoothing_lag_ms must be >= 0")
        if not isinstance(self.fec_redundancy, int) or self.fec_redundancy < 1:
            raise ValueError("fec_redundancy must be an integer >= 1")
        if self.predictor_horizon_ms is not None and self.predictor_horizon_ms < 0:
            raise ValueError("predictor_horizon_ms must be >= 0 or None")
        if self.rto_ms <= 0:
            raise ValueError("rto_ms must be > 0")
        if not isinstance(self.max_retries, int) or self.max_retries < 0:
            raise ValueError("max_retries must be an integer >= 0")
        if self.stiffness_k0 <= 0:
            raise ValueError("stiffness_k0 must be > 0")
        if self.stiffness_alpha < 0:
            raise ValueError("stiffness_alpha must be >= 0")
        if self.damping_b < 0:
            raise ValueError("damping_b must be >= 0")


def fec_encode(packet: UpdatePacket, redundancy: int) -> list[UpdatePacket]:
    """Duplicate-copy redundancy: r identical transmissions of one update.

    Offered bytes scale exactly by r; on an independent-loss link the
    post-dedup loss rate drops from p to p**r.
    """
    if not isinstance(redundancy, int) or redundancy < 1:
        raise ValueError("redundancy must be an integer >= 1")
    return [packet] * redundancy


class ReceiveDisposition(enum.Enum):
    DELIVER = "DELIVER"
    DUPLICATE = "DUPLICATE"


class DedupWindow:
    """Tracks which seqs were already delivered, over a sliding window.

    The first copy of a seq is delivered, later copies are discarded.  Seqs
    that fall behind the window are treated as stale and discarded whether
    or not they were ever seen.
    """

    def __init__(self, window: int = DEDUP_WINDOW):
        if window < 1:
            raise ValueError("window must be >= 1")
        self.window = window
        self._seen: set[int] = set()
        self._highest: int | None = None

    def receive(self, seq: int) -> ReceiveDisposition:
        if self._highest is not None and seq <= self._highest - self.window:
            return ReceiveDisposition.DUPLICATE
        if seq in self._seen:
            return ReceiveDisposition.DUPLICATE
        self._seen.add(seq)
        if self._highest is None or seq > self._highest:
            self._highest = seq
            if len(self._seen) > 2 * self.window:
                floor = self._highest - self.window
                self._seen = {s for s in self._seen if s > floor}
        return ReceiveDisposition.DELIVER


def fec_receive(window: DedupWindow, seq: int) -> ReceiveDisposition:
    """Receiver side of duplicate-copy redundancy (see :class:`DedupWindow`)."""
    return window.receive(seq)


def smoothing_release(gen_time_ms: float, arrival_ms: float, lag_ms: float) -> float | None:
    """Receiver buffer that converts variable arrival times into the exact
    generation schedule shifted by ``lag_ms``.

    Returns the release time, or None when the packet arrived too late to
    make its slot (the caller hands it to the predictor path instead).
    """
    if lag_ms < 0:
        raise ValueError("lag_ms must be >= 0")
    release_at = gen_time_ms + lag_ms
    if arrival_ms > release_at:
        return None
    return release_at


class PredictorHistory:
    """Last two accepted samples per key, for linear dead reckoning."""

    def __init__(self):
        self._samples: dict[object, deque[tuple[float, tuple[float, ...]]]] = {}

    def observe(self, key, t_ms: float, values: tuple[float, ...]) -> None:
        """Record a sample; non-increasing times are ignored (stale input)."""
        dq = self._samples.get(key)
        if dq is None:
            dq = deque(maxlen=2)
            self._samples[key] = dq
        if dq and t_ms <= dq[-1][0]:
            return
        dq.append((t_ms, tuple(values)))

    def newest_time(self, key) -> float | None:
        dq = self._samples.get(key)
        return dq[-1][0] if dq else None

    def predict(self, key, t_ms: float, horizon_ms: float | None = None) -> tuple[float, ...] | None:
        """Extrapolate to ``t_ms``; hold with one sample, None with none.

        ``horizon_ms`` caps how far past the newest sample the line is
        extended, to avoid runaway on long gaps.
        """
        dq = self._samples.get(key)
        if not dq:
            return None
        t1, x1 = dq[-1]
        if t_ms < t1:
            raise ValueError("prediction target precedes newest sample")
        if len(dq) == 1:
            return x1
        t0, x0 = dq[0]
        target = t_ms
        if horizon_ms is not None and target - t1 > horizon_ms:
            target = t1 + horizon_ms
        scale = (target - t1) / (t1 - t0)
        return tuple(v1 + (v1 - v0) * scale for v0, v1 in zip(x0, x1))


def predict_linear(history: PredictorHistory, key, t_ms: float,
                   horizon_ms: float | None = None) -> tuple[float, ...] | None:
    """Linear extrapolation from the last two samples of ``key``."""
    return history.predict(key, t_ms, horizon_ms)


def delay_equalization_lags(per_client_delay_ms: dict) -> dict:
    """Per-client render lags so that delay + lag is identical everywhere.

    The slowest client gets lag zero; everyone else buffers the difference.
    """
    if not per_client_delay_ms:
        raise ValueError("per_client_delay_ms must not be empty")
    for client, delay in per_client_delay_ms.items():
        if delay < 0:
            raise ValueError(f"negative delay for client {client!r}")
    worst = max(per_client_delay_ms.values())
    return {client: worst - delay for client, delay in per_client_delay_ms.items()}


def reliable_send_schedule(sent_at_ms: float, rto_ms: float, max_retries: int,
                           ack_at_ms: float | None = None) -> list[float]:
    """Transmission times for a key event under retransmit-until-acked.

    Retries fire every ``rto_ms`` until the ack arrival precedes the next
    scheduled transmission or ``max_retries`` is exhausted.  Only key events
    are ever retransmitted; routine state updates never are.
    """
    if rto_ms <= 0:
        raise ValueError("rto_ms must be > 0")
    if max_retries < 0:
        raise ValueError("max_retries must be >= 0")
    times = [sent_at_ms]
    for attempt in range(1, max_retries + 1):
        next_at = sent_at_ms + attempt * rto_ms
        if ack_at_ms is not None and ack_at_ms < next_at:
            break
        times.append(next_at)
    return times


def adaptive_stiffness(k0: float, alpha_per_s: float, rtt_ms: float) -> float:
    """Spring constant degraded by measured round-trip time."""
    return k0 / (1.0 + alpha_per_s * rtt_ms / 1000.0)


def render_force(depth: float, normal: Vec3, hip_velocity: Vec3, rtt_ms: float,
                 cfg: CompensationConfig) -> Vec3:
    """Contact force from a delay-adaptive spring plus a damping term.

    ``depth`` is the penetration along ``normal`` (a unit vector pointing
    out of the surface).  Zero depth with zero damping renders zero force.
    """
    if depth < 0 or not math.isfinite(depth):
        raise ValueError("penetration depth must be >= 0")
    k = adaptive_stiffness(cfg.stiffness_k0, cfg.stiffness_alpha, rtt_ms)
    spring = normal.scaled(k * depth)
    if cfg.damping_b == 0:
        return spring
    return spring - hip_velocity.scaled(cfg.damping_b)
