"""Measurement side of the simulator: transfer rates over 10-second
intervals, bandwidth figures derived from packets/sec and average packet
size, interarrival jitter, state divergence, contact fidelity, and the
perceptual threshold flags.

Every report field is computable from the saved traces alone, so a report
regenerated from disk matches the live one exactly.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

from .statemodel import Vec3

# Haptic signals are perceived as distinct only when at least this far
# apart, and their ordering is ambiguous below the second threshold.
DISTINCTNESS_MS = 5.5
ORDERING_MS = 20.0
# Haptic streams degrade with interarrival jitter beyond this stddev (a
# stddev reading of the usual "variance of interarrival time" definition).
JITTER_BREACH_STDDEV_MS = 2.0

DEFAULT_INTERVAL_S = 10.0
DEFAULT_FORCE_STEP_THRESHOLD = 1.0  # force units per sample at 1 kHz


def _series_stats(series: list[float]) -> tuple[float, float, float]:
    """(mean, sample stddev, max); stddev is 0 for fewer than 2 points."""
    n = len(series)
    if n == 0:
        return 0.0, 0.0, 0.0
    mean = sum(series) / n
    if n == 1:
        return mean, 0.0, series[0]
    var = sum((x - mean) ** 2 for x in series) / (n - 1)
    return mean, math.sqrt(var), max(series)


def interval_stats(counts: list[int], interval_s: float) -> tuple[float, float, float]:
    """Per-interval packet counts -> (avg, stddev, max) of packets/sec.

    Sample standard deviation (n-1 denominator), defined as 0 for a single
    interval.
    """
    if not counts:
        raise ValueError("counts must not be empty")
    if interval_s <= 0:
        raise ValueError("interval_s must be > 0")
    rates = [c / interval_s for c in counts]
    return _series_stats(rates)


def bandwidth_kbps(pps: float, avg_packet_bytes: float) -> float:
    """Required bandwidth from a transfer rate and an average packet size."""
    if pps < 0 or avg_packet_bytes < 0:
        raise ValueError("pps and avg_packet_bytes must be >= 0")
    return pps * avg_packet_bytes * 8.0 / 1000.0


def jitter_stats(arrival_times_ms: list[float]) -> tuple[float, float]:
    """Sample variance and stddev of packet interarrival times."""
    if len(arrival_times_ms) < 3:
        raise ValueError("need at least 3 arrivals to estimate jitter")
    gaps = [b - a for a, b in zip(arrival_times_ms, arrival_times_ms[1:])]
    mean = sum(gaps) / len(gaps)
    var = sum((g - mean) ** 2 for g in gaps) / (len(gaps) - 1)
    return var, math.sqrt(var)


def state_divergence(truth: list[Vec3], view: list[Vec3], shift_ms: float,
                     tick_ms: float = 1.0) -> float:
    """RMS distance between the view and the ground truth shifted by the
    transport delay, so pure delay does not register as divergence."""
    if len(truth) != len(view):
        raise ValueError("truth and view traces must cover the same span")
    shift = round(shift_ms / tick_ms)
    if shift < 0:
        raise ValueError("shift_ms must be >= 0")
    total = 0.0
    n = 0
    for i in range(shift, len(view)):
        d = view[i] - truth[i - shift]
        total += d.x * d.x + d.y * d.y + d.z * d.z
        n += 1
    return math.sqrt(total / n) if n else 0.0


@dataclass(frozen=True)
class PerceptualFlags:
    distinctness_violations: int = 0
    ordering_ambiguities: int = 0
    jitter_breach: bool = False


def perceptual_flags(event_times_ms: list[float],
                     measured_jitter_stddev_ms: float = 0.0) -> PerceptualFlags:
    """Threshold checks on a sorted stream of haptic event times.

    Consecutive events closer than 5.5 ms are not perceived as distinct;
    closer than 20 ms their ordering is ambiguous (a distinctness violation
    implies an ordering flag).  Jitter above 2 ms stddev breaches the
    haptic tolerance.
    """
    distinct = 0
    ordering = 0
    for a, b in zip(event_times_ms, event_times_ms[1:]):
        gap = b - a
        if gap < DISTINCTNESS_MS:
            distinct += 1
        if gap < ORDERING_MS:
            ordering += 1
    return PerceptualFlags(
        distinctness_violations=distinct,
        ordering_ambiguities=ordering,
        jitter_breach=measured_jitter_stddev_ms > JITTER_BREACH_STDDEV_MS,
    )


def force_discontinuities(forces: list[Vec3],
                          threshold: float = DEFAULT_FORCE_STEP_THRESHOLD) -> int:
    """Count sample-to-sample force jumps larger than ``threshold``."""
    if threshold <= 0:
        raise ValueError("threshold must be > 0")
    count = 0
    for prev, cur in zip(forces, forces[1:]):
        if (cur - prev).norm() > threshold:
            count += 1
    return count


@dataclass(frozen=True)
class DirectionStats:
    """Interval statistics for one flow direction at the server."""

    packets: int
    bytes: int
    avg_pps: float
    stddev_pps: float
    max_pps: float
    avg_packet_bytes: float
    avg_kbps: float
    stddev_kbps: float
    max_kbps: float


@dataclass(frozen=True)
class ClientMetrics:
    divergence_rms: float
    contact_losses: int
    force_discontinuities: int
    contact_onsets: int
    distinctness_violations: int
    ordering_ambiguities: int
    jitter_breach: bool
    jitter_stddev_ms: float | None
    delay_mean_ms: float
    delay_max_ms: float
    delay_last_ms: float
    decorator_series: tuple[tuple[float, float], ...] = field(repr=False)


@dataclass(frozen=True)
class MetricsReport:
    duration_s: float
    interval_s: float
    intervals: tuple[tuple[int, int, int, int], ...]  # (to pkts, to bytes, from pkts, from bytes)
    to_server: DirectionStats
    from_server: DirectionStats
    total_avg_pps: float   # to_server.avg_pps + from_server.avg_pps, by definition
    total_stddev_pps: float
    total_max_pps: float
    loss_pre_fec: dict[str, float]
    loss_post_fec: dict[str, float]
    link_jitter: dict[str, tuple[float, float] | None]
    clients: tuple[ClientMetrics, ...]


def _direction_stats(counts: list[int], byte_counts: list[int],
                     interval_lengths: list[float]) -> DirectionStats:
    packets = sum(counts)
    nbytes = sum(byte_counts)
    rates = [c / l for c, l in zip(counts, interval_lengths)]
    avg, sd, mx = _series_stats(rates)
    avg_size = nbytes / packets if packets else 0.0
    return DirectionStats(
        packets=packets,
        bytes=nbytes,
        avg_pps=avg,
        stddev_pps=sd,
        max_pps=mx,
        avg_packet_bytes=avg_size,
        avg_kbps=bandwidth_kbps(avg, avg_size),
        stddev_kbps=bandwidth_kbps(sd, avg_size),
        max_kbps=bandwidth_kbps(mx, avg_size),
    )


class MetricsCollector:
    """Streaming accumulator fed by the simulation loop (or by a trace
    replay; both paths produce identical reports)."""

    def __init__(self, n_clients: int, n_cubes: int, duration_s: float,
                 interval_s: float, shift_ticks: list[int], tick_ms: float,
                 force_threshold: float, links: list[str]):
        self.duration_s = duration_s
        self.interval_s = interval_s
        self.tick_ms = tick_ms
        self.force_threshold = force_threshold
        self.n_intervals = max(0, math.ceil(duration_s / interval_s - 1e-12))
        self._interval_us = round(interval_s * 1_000_000)
        self._to_counts = [0] * self.n_intervals
        self._to_bytes = [0] * self.n_intervals
        self._from_counts = [0] * self.n_intervals
        self._from_bytes = [0] * self.n_intervals
        self._arrivals: dict[str, list[int]] = {link: [] for link in links}
        self._sent_seqs = {"c2s": 0, "s2c": 0}
        self._first_deliveries = {"c2s": 0, "s2c": 0}
        self._offered = {"c2s": 0, "s2c": 0}
        self._loss_drops = {"c2s": 0, "s2c": 0}
        self._shift_ticks = shift_ticks
        self._truth_rings = [deque(maxlen=max(shift_ticks, default=0) + 1)
                             for _ in range(n_cubes)]
        self._div_sum = [0.0] * n_clients
        self._div_n = [0] * n_clients
        self._contact_losses = [0] * n_clients
        self._onsets: list[list[float]] = [[] for _ in range(n_clients)]
        self._force_prev: list[Vec3 | None] = [None] * n_clients
        self._force_steps = [0] * n_clients
        self._decorator: list[list[tuple[float, float]]] = [[] for _ in range(n_clients)]
        self._tick_count = 0

    # -- packet accounting -------------------------------------------------

    def _bucket(self, t_us: int) -> int | None:
        if t_us >= round(self.duration_s * 1_000_000):
            return None
        idx = t_us // self._interval_us
        return idx if idx < self.n_intervals else None

    def count_from_server_offer(self, t_us: int, nbytes: int) -> None:
        idx = self._bucket(t_us)
        if idx is not None:
            self._from_counts[idx] += 1
            self._from_bytes[idx] += nbytes

    def count_to_server_delivery(self, deliver_us: int, nbytes: int) -> None:
        idx = self._bucket(deliver_us)
        if idx is not None:
            self._to_counts[idx] += 1
            self._to_bytes[idx] += nbytes

    def record_offer(self, direction: str) -> None:
        self._offered[direction] += 1

    def record_loss_drop(self, direction: str) -> None:
        self._loss_drops[direction] += 1

    def record_sent_seq(self, direction: str) -> None:
        self._sent_seqs[direction] += 1

    def record_first_delivery(self, direction: str) -> None:
        self._first_deliveries[direction] += 1

    def record_arrival(self, link: str, deliver_us: int) -> None:
        self._arrivals[link].append(deliver_us)

    def record_decorator(self, client: int, t_ms: float, delay_ms: float) -> None:
        self._decorator[client].append((t_ms, delay_ms))

    # -- world-state accounting --------------------------------------------

    def record_truth(self, cube: int, pos: Vec3) -> None:
        self._truth_rings[cube].append(pos)

    def record_view(self, client: int, cube: int, pos: Vec3) -> None:
        ring = self._truth_rings[cube]
        shift = self._shift_ticks[client]
        if len(ring) > shift:
            truth = ring[-1 - shift]
            d = pos - truth
            self._div_sum[client] += d.x * d.x + d.y * d.y + d.z * d.z
            self._div_n[client] += 1

    def record_force(self, client: int, force: Vec3) -> None:
        prev = self._force_prev[client]
        if prev is not None and (force - prev).norm() > self.force_threshold:
            self._force_steps[client] += 1
        self._force_prev[client] = force

    def record_contact_onset(self, client: int, t_ms: float) -> None:
        self._onsets[client].append(t_ms)

    def record_contact_loss(self, client: int) -> None:
        self._contact_losses[client] += 1

    def record_tick(self) -> None:
        self._tick_count += 1

    # -- finalize ------------------------------------------------------------

    def _interval_lengths(self) -> list[float]:
        lengths = []
        for i in range(self.n_intervals):
            remaining = self.duration_s - i * self.interval_s
            lengths.append(min(self.interval_s, remaining))
        return lengths

    def finalize(self) -> MetricsReport:
        lengths = self._interval_lengths()
        to_server = _direction_stats(self._to_counts, self._to_bytes, lengths)
        from_server = _direction_stats(self._from_counts, self._from_bytes, lengths)
        totals = [a + b for a, b in zip(self._to_counts, self._from_counts)]
        total_rates = [c / l for c, l in zip(totals, lengths)]
        _, total_sd, total_mx = _series_stats(total_rates)

        loss_pre = {}
        loss_post = {}
        for direction in ("c2s", "s2c"):
            offered = self._offered[direction]
            loss_pre[direction] = self._loss_drops[direction] / offered if offered else 0.0
            sent = self._sent_seqs[direction]
            got = self._first_deliveries[direction]
            loss_post[direction] = 1.0 - got / sent if sent else 0.0

        link_jitter: dict[str, tuple[float, float] | None] = {}
        for link, arrivals in self._arrivals.items():
            if len(arrivals) >= 3:
                link_jitter[link] = jitter_stats([t / 1000.0 for t in arrivals])
            else:
                link_jitter[link] = None

        clients = []
        for k in range(len(self._div_sum)):
            rms = math.sqrt(self._div_sum[k] / self._div_n[k]) if self._div_n[k] else 0.0
            jit = link_jitter.get(f"s>c{k + 1}")
            jit_sd = jit[1] if jit else None
            flags = perceptual_flags(self._onsets[k], jit_sd if jit_sd is not None else 0.0)
            series = self._decorator[k]
            delays = [d for _, d in series]
            clients.append(ClientMetrics(
                divergence_rms=rms,
                contact_losses=self._contact_losses[k],
                force_discontinuities=self._force_steps[k],
                contact_onsets=len(self._onsets[k]),
                distinctness_violations=flags.distinctness_violations,
                ordering_ambiguities=flags.ordering_ambiguities,
                jitter_breach=flags.jitter_breach,
                jitter_stddev_ms=jit_sd,
                delay_mean_ms=sum(delays) / len(delays) if delays else 0.0,
                delay_max_ms=max(delays) if delays else 0.0,
                delay_last_ms=delays[-1] if delays else 0.0,
                decorator_series=tuple(series),
            ))

        return MetricsReport(
            duration_s=self.duration_s,
            interval_s=self.interval_s,
            intervals=tuple(zip(self._to_counts, self._to_bytes,
                                self._from_counts, self._from_bytes)),
            to_server=to_server,
            from_server=from_server,
            total_avg_pps=to_server.avg_pps + from_server.avg_pps,
            total_stddev_pps=total_sd,
            total_max_pps=total_mx,
            loss_pre_fec=loss_pre,
            loss_post_fec=loss_post,
            link_jitter=link_jitter,
            clients=tuple(clients),
        )


def precision_label(quantum: float) -> str:
    inverse = 1.0 / quantum
    if abs(inverse - round(inverse)) < 1e-9:
        return f"1/{round(inverse)}"
    return repr(quantum)


def render_table(report: MetricsReport, quantum: float) -> str:
    """Plain-text summary in the row layout of the throughput tables:
    per-direction packets/sec and bandwidth, with average / standard
    deviation / maximum columns."""
    rows = [
        ("Packets/sec", report.total_avg_pps, report.total_stddev_pps,
         report.total_max_pps, ""),
        ("Packets/sec From Server", report.from_server.avg_pps,
         report.from_server.stddev_pps, report.from_server.max_pps, ""),
        ("Bandwidth From Server", report.from_server.avg_kbps,
         report.from_server.stddev_kbps, report.from_server.max_kbps, "kbps"),
        ("Packets/sec To Server", report.to_server.avg_pps,
         report.to_server.stddev_pps, report.to_server.max_pps, ""),
        ("Bandwidth To Server", report.to_server.avg_kbps,
         report.to_server.stddev_kbps, report.to_server.max_kbps, "kbps"),
    ]
    lines = [
        f"{'Precision':<26}{precision_label(quantum)}",
        f"{'':<26}{'Average':<12}{'Standard Deviation':<22}{'Maximum':<10}",
    ]
    for label, avg, sd, mx, unit in rows:
        lines.append(
            f"{label:<26}{str(round(avg)) + unit:<12}"
            f"{str(round(sd)) + unit:<22}{str(round(mx)) + unit:<10}"
        )
    lines.append("")
    lines.append(f"{'Avg packet size From Server':<30}"
                 f"{report.from_server.avg_packet_bytes:.1f} bytes")
    lines.append(f"{'Avg packet size To Server':<30}"
                 f"{report.to_server.avg_packet_bytes:.1f} bytes")
    return "\n".join(lines) + "\n"


def report_csv_rows(report: MetricsReport) -> list[tuple[str, str]]:
    """Flat (metric, value) rows for report.csv; floats keep full precision."""
    rows: list[tuple[str, str]] = [("duration_s", repr(report.duration_s)),
                                   ("interval_s", repr(report.interval_s))]
    for name, d in (("to_server", report.to_server), ("from_server", report.from_server)):
        rows += [
            (f"{name}.packets", str(d.packets)),
            (f"{name}.bytes", str(d.bytes)),
            (f"{name}.avg_pps", repr(d.avg_pps)),
            (f"{name}.stddev_pps", repr(d.stddev_pps)),
            (f"{name}.max_pps", repr(d.max_pps)),
            (f"{name}.avg_packet_bytes", repr(d.avg_packet_bytes)),
            (f"{name}.avg_kbps", repr(d.avg_kbps)),
            (f"{name}.stddev_kbps", repr(d.stddev_kbps)),
            (f"{name}.max_kbps", repr(d.max_kbps)),
        ]
    rows += [
        ("total.avg_pps", repr(report.total_avg_pps)),
        ("total.stddev_pps", repr(report.total_stddev_pps)),
        ("total.max_pps", repr(report.total_max_pps)),
    ]
    for direction in ("c2s", "s2c"):
        rows.append((f"loss_pre_fec.{direction}", repr(report.loss_pre_fec[direction])))
        rows.append((f"loss_post_fec.{direction}", repr(report.loss_post_fec[direction])))
    for link, jit in report.link_jitter.items():
        rows.append((f"jitter_variance_ms2.{link}", repr(jit[0]) if jit else ""))
        rows.append((f"jitter_stddev_ms.{link}", repr(jit[1]) if jit else ""))
    for k, c in enumerate(report.clients, start=1):
        prefix = f"client{k}"
        rows += [
            (f"{prefix}.divergence_rms", repr(c.divergence_rms)),
            (f"{prefix}.contact_losses", str(c.contact_losses)),
            (f"{prefix}.force_discontinuities", str(c.force_discontinuities)),
            (f"{prefix}.contact_onsets", str(c.contact_onsets)),
            (f"{prefix}.distinctness_violations", str(c.distinctness_violations)),
            (f"{prefix}.ordering_ambiguities", str(c.ordering_ambiguities)),
            (f"{prefix}.jitter_breach", str(int(c.jitter_breach))),
            (f"{prefix}.delay_mean_ms", repr(c.delay_mean_ms)),
            (f"{prefix}.delay_max_ms", repr(c.delay_max_ms)),
            (f"{prefix}.delay_last_ms", repr(c.delay_last_ms)),
        ]
    for i, (tp, tb, fp, fb) in enumerate(report.intervals):
        rows.append((f"interval{i}.to_server_packets", str(tp)))
        rows.append((f"interval{i}.to_server_bytes", str(tb)))
        rows.append((f"interval{i}.from_server_packets", str(fp)))
        rows.append((f"interval{i}.from_server_bytes", str(fb)))
    return rows
