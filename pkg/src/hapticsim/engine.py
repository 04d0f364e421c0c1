"""Deterministic event-driven simulation of the client-server haptic
environment: one server, scripted clients ticking at 1 kHz, dead-band
suppressed state updates flowing through impaired channels and the
compensation pipeline, and a cooperative cube-stacking world.

Determinism contract: a (scenario, seed) pair fully determines every output
byte.  The event queue orders by (time, priority, creation ordinal); within
one timestamp arrivals land before buffer releases, which land before
retransmissions, which land before the tick that observes them.
"""

from __future__ import annotations

import bisect
import heapq
import math
import random
from dataclasses import dataclass, field
from decimal import Decimal
from typing import IO, Iterable, Sequence

from .channel import Channel, ChannelConfig, Delivered, DropReason
from .compensation import (
    CompensationConfig,
    DedupWindow,
    PredictorHistory,
    ReceiveDisposition,
    delay_equalization_lags,
    render_force,
    smoothing_release,
)
from .metrics import MetricsCollector, MetricsReport
from .statemodel import (
    GRAB_CODE,
    RELEASE_CODE,
    WORKSPACE_LIMIT,
    QuantizerConfig,
    UpdateKind,
    UpdatePacket,
    Vec3,
    decode_packet,
    encode_packet,
    packet_size,
    round_half_away,
)

DESCENT_RATE = 1.0  # units per second a released cube falls until supported

STATE_HEADER = "time_ms,entity,x,y,z,rot,source\n"

_PRIO_ARRIVAL = 0
_PRIO_RELEASE = 1
_PRIO_RETX = 2
_PRIO_TICK = 3

_ZERO = Vec3(0.0, 0.0, 0.0)


@dataclass(frozen=True, slots=True)
class Waypoint:
    """Trajectory sample; scripts interpolate linearly between waypoints and
    hold constant outside their span."""

    t_ms: float
    pos: Vec3


def trajectory_position(script: Sequence[Waypoint], t_ms: float) -> Vec3:
    """Piecewise-linear interpolation with constant extrapolation."""
    if not script:
        raise ValueError("script must not be empty")
    if t_ms <= script[0].t_ms:
        return script[0].pos
    if t_ms >= script[-1].t_ms:
        return script[-1].pos
    times = [w.t_ms for w in script]
    idx = bisect.bisect_right(times, t_ms) - 1
    return _lerp(script[idx], script[idx + 1], t_ms)


def _lerp(w0: Waypoint, w1: Waypoint, t_ms: float) -> Vec3:
    f = (t_ms - w0.t_ms) / (w1.t_ms - w0.t_ms)
    p0, p1 = w0.pos, w1.pos
    return Vec3(
        p0.x + (p1.x - p0.x) * f,
        p0.y + (p1.y - p0.y) * f,
        p0.z + (p1.z - p0.z) * f,
    )


class _Cursor:
    """Forward-only trajectory reader for the tick loop; agrees exactly with
    :func:`trajectory_position`."""

    __slots__ = ("script", "i")

    def __init__(self, script: Sequence[Waypoint]):
        self.script = script
        self.i = 0

    def at(self, t_ms: float) -> Vec3:
        script = self.script
        while self.i + 1 < len(script) and script[self.i + 1].t_ms <= t_ms:
            self.i += 1
        if t_ms <= script[0].t_ms:
            return script[0].pos
        if self.i + 1 >= len(script):
            return script[-1].pos
        return _lerp(script[self.i], script[self.i + 1], t_ms)


def box_penetration(point: Vec3, center: Vec3, half: float) -> tuple[float, Vec3]:
    """Penetration depth and outward face normal of a point inside an
    axis-aligned cube.  The rotation angle is pose data only; contact
    geometry stays axis-aligned."""
    dx = point.x - center.x
    px = half - abs(dx)
    if px <= 0:
        return 0.0, _ZERO
    dy = point.y - center.y
    py = half - abs(dy)
    if py <= 0:
        return 0.0, _ZERO
    dz = point.z - center.z
    pz = half - abs(dz)
    if pz <= 0:
        return 0.0, _ZERO
    if px <= py and px <= pz:
        return px, Vec3(1.0 if dx >= 0 else -1.0, 0.0, 0.0)
    if py <= pz:
        return py, Vec3(0.0, 1.0 if dy >= 0 else -1.0, 0.0)
    return pz, Vec3(0.0, 0.0, 1.0 if dz >= 0 else -1.0)


def _default_trajectories() -> list[list[Waypoint]]:
    return [
        [Waypoint(0.0, Vec3(-0.5, 0.0, 0.25))],
        [Waypoint(0.0, Vec3(0.5, 0.0, 0.25))],
    ]


def _default_channels() -> list[ChannelConfig]:
    return [ChannelConfig(), ChannelConfig()]


@dataclass
class Scenario:
    """Everything a run needs; equal scenarios with equal seeds produce
    byte-identical outputs."""

    duration_s: float = 10.0
    seed: int = 1
    tick_rate_hz: int = 1000
    grab_distance: float = 0.35
    cube_size: float = 0.5
    interval_s: float = 10.0
    force_threshold: float = 1.0
    c2s: list[ChannelConfig] = field(default_factory=_default_channels)
    s2c: list[ChannelConfig] = field(default_factory=_default_channels)
    compensation: CompensationConfig = field(default_factory=CompensationConfig)
    quantizer: QuantizerConfig = field(default_factory=QuantizerConfig)
    trajectories: list[list[Waypoint]] = field(default_factory=_default_trajectories)
    cubes: list[tuple[Vec3, float]] = field(
        default_factory=lambda: [(Vec3(0.0, 0.0, 0.25), 0.0)]
    )

    @property
    def n_clients(self) -> int:
        return len(self.trajectories)

    @property
    def n_cubes(self) -> int:
        return len(self.cubes)

    def validate(self) -> None:
        if not (self.duration_s >= 0) or not math.isfinite(self.duration_s):
            raise ValueError("duration_s must be >= 0")
        if not isinstance(self.tick_rate_hz, int) or self.tick_rate_hz <= 0:
            raise ValueError("tick_rate_hz must be a positive integer")
        if 1_000_000 % self.tick_rate_hz != 0:
            raise ValueError("tick_rate_hz must divide 1e6 microseconds")
        ticks = self.duration_s * self.tick_rate_hz
        if abs(ticks - round(ticks)) > 1e-9:
            raise ValueError("duration_s must be a whole number of ticks")
        if not self.trajectories:
            raise ValueError("need at least one client trajectory")
        if len(self.c2s) != self.n_clients or len(self.s2c) != self.n_clients:
            raise ValueError("channel config count must match client count")
        if self.n_clients > 99 or self.n_cubes > 99:
            raise ValueError("endpoint and object ids are limited to two digits")
        for script in self.trajectories:
            if not script:
                raise ValueError("trajectory scripts must not be empty")
            last = None
            for w in script:
                if last is not None and w.t_ms <= last:
                    raise ValueError("waypoint times must be strictly increasing")
                last = w.t_ms
                for coord in w.pos.as_tuple():
                    if abs(coord) >= WORKSPACE_LIMIT:
                        raise ValueError("waypoint outside the workspace bound")
        for pos, _rot in self.cubes:
            for coord in pos.as_tuple():
                if abs(coord) >= WORKSPACE_LIMIT:
                    raise ValueError("cube pose outside the workspace bound")
        if not (self.grab_distance > 0):
            raise ValueError("grab_distance must be > 0")
        if not (self.cube_size > 0):
            raise ValueError("cube_size must be > 0")
        if not (self.interval_s > 0):
            raise ValueError("interval_s must be > 0")
        if not (self.force_threshold > 0):
            raise ValueError("force_threshold must be > 0")


@dataclass
class SimResult:
    report: MetricsReport
    channels: dict[str, dict[str, int]]
    cube_poses: list[tuple[Vec3, float]]
    ticks: int


def _links(n_clients: int) -> list[str]:
    return [f"c{k + 1}>s" for k in range(n_clients)] + \
           [f"s>c{k + 1}" for k in range(n_clients)]


def _shift_ticks(scenario: Scenario) -> list[int]:
    tick_ms = 1000.0 / scenario.tick_rate_hz
    return [round(cfg.base_delay_ms / tick_ms) for cfg in scenario.s2c]


def _make_collector(scenario: Scenario) -> MetricsCollector:
    return MetricsCollector(
        n_clients=scenario.n_clients,
        n_cubes=scenario.n_cubes,
        duration_s=scenario.duration_s,
        interval_s=scenario.interval_s,
        shift_ticks=_shift_ticks(scenario),
        tick_ms=1000.0 / scenario.tick_rate_hz,
        force_threshold=scenario.force_threshold,
        links=_links(scenario.n_clients),
    )


class _ClientState:
    __slots__ = (
        "idx", "cursor", "prev_hip", "hip_cells", "hip_seq", "key_seq",
        "windows", "stale_max", "released", "history", "pending", "near",
        "view_depth", "rtt_ms",
    )

    def __init__(self, idx: int, script: Sequence[Waypoint], n_cubes: int):
        self.idx = idx  # zero-based
        self.cursor = _Cursor(script)
        self.prev_hip = script[0].pos
        self.hip_cells: tuple[int, int, int] | None = None
        self.hip_seq = 0
        self.key_seq = 0
        self.windows = {UpdateKind.CUBE_POSE: DedupWindow(), UpdateKind.ACK: DedupWindow()}
        self.stale_max: dict[tuple, int] = {}
        self.released: dict[int, tuple[float, tuple[float, ...]]] = {}
        self.history = PredictorHistory()
        self.pending: dict[int, UpdatePacket] = {}
        self.near = [False] * n_cubes
        self.view_depth = [0.0] * n_cubes
        self.rtt_ms = 0.0


class _ServerState:
    __slots__ = (
        "hips", "cube_pos", "cube_rot", "held", "descending", "intents",
        "last_cells", "cube_seq", "ack_seq", "windows", "stale_max",
        "changed", "need_initial",
    )

    def __init__(self, scenario: Scenario):
        self.hips = [script[0].pos for script in scenario.trajectories]
        self.cube_pos = [pos for pos, _ in scenario.cubes]
        self.cube_rot = [rot for _, rot in scenario.cubes]
        self.held: int | None = None
        self.descending: dict[int, float] = {}  # cube -> target center z
        self.intents = [[False] * scenario.n_clients for _ in range(scenario.n_cubes)]
        self.last_cells: list[list[tuple | None]] = [
            [None] * scenario.n_cubes for _ in range(scenario.n_clients)
        ]
        self.cube_seq = 0
        self.ack_seq = 0
        self.windows = {
            (k, kind): DedupWindow()
            for k in range(scenario.n_clients)
            for kind in (UpdateKind.HIP_POS, UpdateKind.KEY_EVENT)
        }
        self.stale_max: dict[tuple, int] = {}
        self.changed = [True] * scenario.n_cubes
        self.need_initial = True


class _Sim:
    def __init__(self, scenario: Scenario, packet_sink: IO[str] | None,
                 state_sink: IO[str] | None):
        scenario.validate()
        self.sc = scenario
        self.packet_sink = packet_sink
        self.state_sink = state_sink
        self.comp = scenario.compensation
        self.quantum = scenario.quantizer.quantum
        self.qdec = Decimal(str(self.quantum))
        self.decimals = scenario.quantizer.decimals
        self.rate = scenario.tick_rate_hz
        self.tick_us = 1_000_000 // self.rate
        self.ticks = round(scenario.duration_s * self.rate)
        self.duration_us = self.ticks * self.tick_us
        self.half = scenario.cube_size / 2.0
        self.gd2 = scenario.grab_distance * scenario.grab_distance
        self.descent_per_tick = DESCENT_RATE / self.rate

        master = random.Random(scenario.seed)
        self.c2s_ch = [Channel(cfg, seed=master.getrandbits(63)) for cfg in scenario.c2s]
        self.s2c_ch = [Channel(cfg, seed=master.getrandbits(63)) for cfg in scenario.s2c]
        self.s2c_base = [cfg.base_delay_ms for cfg in scenario.s2c]

        if self.comp.delay_equalization_enabled:
            # Releases are scheduled against generation time, so buffering
            # each arrival by its equalization lag is the same as giving
            # every client the identical lag delay(c) + eq_lag(c), i.e. the
            # worst base delay.
            lags = delay_equalization_lags(
                {k: cfg.base_delay_ms for k, cfg in enumerate(scenario.s2c)}
            )
            equalized = [scenario.s2c[k].base_delay_ms + lags[k]
                         for k in range(scenario.n_clients)]
            self.lag_total = [self.comp.smoothing_lag_ms + equalized[k]
                              for k in range(scenario.n_clients)]
        else:
            self.lag_total = [self.comp.smoothing_lag_ms] * scenario.n_clients

        self.clients = [
            _ClientState(k, script, scenario.n_cubes)
            for k, script in enumerate(scenario.trajectories)
        ]
        self.server = _ServerState(scenario)
        self.collector = _make_collector(scenario)
        self.heap: list[tuple] = []
        self.ordinal = 0
        self.tick_count = 0

    # -- event plumbing ------------------------------------------------------

    def _push(self, t_us: int, prio: int, payload: tuple) -> None:
        heapq.heappush(self.heap, (t_us, prio, self.ordinal, payload))
        self.ordinal += 1

    def _cells3(self, v: Vec3) -> tuple[int, int, int]:
        q = self.quantum
        return (round_half_away(v.x / q), round_half_away(v.y / q),
                round_half_away(v.z / q))

    def _cell_value(self, cell: int) -> float:
        return float(self.qdec * cell)

    # -- transmit ------------------------------------------------------------

    def _offer(self, pkt: UpdatePacket, from_server: bool, client_idx: int,
               t_us: int) -> None:
        direction = "s2c" if from_server else "c2s"
        ch = self.s2c_ch[client_idx] if from_server else self.c2s_ch[client_idx]
        link = f"s>c{client_idx + 1}" if from_server else f"c{client_idx + 1}>s"
        copies = (self.comp.fec_redundancy
                  if pkt.kind in (UpdateKind.HIP_POS, UpdateKind.CUBE_POSE) else 1)
        nbytes = packet_size(pkt.kind, self.decimals)
        wire = (encode_packet(pkt, self.decimals).decode("ascii")
                if self.packet_sink is not None else None)
        col = self.collector
        now_ms = t_us / 1000.0
        for _ in range(copies):
            col.record_offer(direction)
            if from_server:
                col.count_from_server_offer(t_us, nbytes)
            res = ch.transmit(nbytes, now_ms)
            if isinstance(res, Delivered):
                deliver_us = round(res.at_ms * 1000.0)
                if wire is not None:
                    self.packet_sink.write(f"DELIVERED {link} {t_us} {deliver_us} {wire}")
                if deliver_us < self.duration_us:
                    self._push(deliver_us, _PRIO_ARRIVAL,
                               (client_idx, from_server, pkt, deliver_us, nbytes, link))
            else:
                if wire is not None:
                    self.packet_sink.write(f"DROP_{res.reason.value} {link} {t_us} - {wire}")
                if res.reason is DropReason.LOSS:
                    col.record_loss_drop(direction)

    def _send_key(self, cs: _ClientState, code: int, obj: int, t_us: int) -> None:
        pkt = UpdatePacket(
            kind=UpdateKind.KEY_EVENT, seq=cs.key_seq, send_time_ms=t_us // 1000,
            sender_id=cs.idx + 1, object_id=obj, aux=code,
        )
        cs.key_seq += 1
        self.collector.record_sent_seq("c2s")
        self._offer(pkt, False, cs.idx, t_us)
        if self.comp.reliable_key_events:
            cs.pending[pkt.seq] = pkt
            if self.comp.max_retries > 0:
                retx_at = t_us + round(self.comp.rto_ms * 1000)
                self._push(retx_at, _PRIO_RETX, (cs.idx, pkt.seq, 1))

    def _send_ack(self, client_idx: int, keyevent: UpdatePacket, t_us: int) -> None:
        srv = self.server
        pkt = UpdatePacket(
            kind=UpdateKind.ACK, seq=srv.ack_seq, send_time_ms=t_us // 1000,
            sender_id=0, object_id=keyevent.object_id, aux=keyevent.seq,
        )
        srv.ack_seq += 1
        self.collector.record_sent_seq("s2c")
        self._offer(pkt, True, client_idx, t_us)

    # -- receive ---------------------------------------------------------------

    def _accept(self, cs: _ClientState, obj: int, gen: float,
                values: tuple[float, ...]) -> None:
        cur = cs.released.get(obj)
        if cur is None or gen > cur[0]:
            cs.released[obj] = (gen, values)
        cs.history.observe(obj, gen, values)

    def _handle_arrival(self, payload: tuple) -> None:
        client_idx, from_server, pkt, deliver_us, nbytes, link = payload
        col = self.collector
        col.record_arrival(link, deliver_us)
        if from_server:
            cs = self.clients[client_idx]
            if pkt.kind is UpdateKind.CUBE_POSE:
                delay_ms = deliver_us / 1000.0 - pkt.send_time_ms
                cs.rtt_ms = 2.0 * delay_ms
                col.record_decorator(client_idx, deliver_us / 1000.0, delay_ms)
            if cs.windows[pkt.kind].receive(pkt.seq) is not ReceiveDisposition.DELIVER:
                return
            col.record_first_delivery("s2c")
            if pkt.kind is UpdateKind.ACK:
                cs.pending.pop(pkt.aux, None)
                return
            key = (pkt.kind, pkt.object_id)
            last = cs.stale_max.get(key)
            if last is not None and pkt.seq < last:
                return
            cs.stale_max[key] = pkt.seq
            gen = float(pkt.send_time_ms)
            lag = self.lag_total[client_idx]
            if lag > 0:
                release_at = smoothing_release(gen, deliver_us / 1000.0, lag)
                if release_at is None:
                    cs.history.observe(pkt.object_id, gen, pkt.values)  # late
                else:
                    self._push(round(release_at * 1000), _PRIO_RELEASE,
                               (client_idx, pkt.object_id, gen, pkt.values))
            else:
                self._accept(cs, pkt.object_id, gen, pkt.values)
        else:
            col.count_to_server_delivery(deliver_us, nbytes)
            srv = self.server
            k = client_idx
            if pkt.kind is UpdateKind.KEY_EVENT:
                # duplicates are re-acked: the earlier ack may have been lost
                self._send_ack(k, pkt, deliver_us)
            if srv.windows[(k, pkt.kind)].receive(pkt.seq) is not ReceiveDisposition.DELIVER:
                return
            col.record_first_delivery("c2s")
            key = (k, pkt.kind, pkt.object_id)
            last = srv.stale_max.get(key)
            if last is not None and pkt.seq < last:
                return
            srv.stale_max[key] = pkt.seq
            if pkt.kind is UpdateKind.HIP_POS:
                srv.hips[k] = Vec3(*pkt.values)
            elif pkt.kind is UpdateKind.KEY_EVENT:
                srv.intents[pkt.object_id][k] = pkt.aux == GRAB_CODE

    def _handle_retx(self, payload: tuple) -> None:
        client_idx, seq, attempt, t_us = payload
        cs = self.clients[client_idx]
        pkt = cs.pending.get(seq)
        if pkt is None:
            return
        self._offer(pkt, False, client_idx, t_us)
        if attempt < self.comp.max_retries:
            retx_at = t_us + round(self.comp.rto_ms * 1000)
            self._push(retx_at, _PRIO_RETX, (client_idx, seq, attempt + 1))

    # -- world --------------------------------------------------------------

    def _descent_target(self, cube: int) -> float:
        srv = self.server
        pos = srv.cube_pos[cube]
        base = pos.z - self.half
        size = self.sc.cube_size
        support = 0.0
        for other in range(self.sc.n_cubes):
            if other == cube:
                continue
            opos = srv.cube_pos[other]
            if abs(pos.x - opos.x) < size and abs(pos.y - opos.y) < size:
                top = opos.z + self.half
                if top <= base + 1e-9 and top > support:
                    support = top
        return support + self.half

    def _release_cube(self, cube: int) -> None:
        srv = self.server
        target = self._descent_target(cube)
        if srv.cube_pos[cube].z > target:
            srv.descending[cube] = target
        else:
            srv.cube_pos[cube] = Vec3(srv.cube_pos[cube].x, srv.cube_pos[cube].y, target)
            srv.changed[cube] = True

    def _view(self, cs: _ClientState, cube: int, t_ms: int) -> tuple[Vec3, float]:
        rel = cs.released.get(cube)
        if self.comp.predictor_enabled:
            due = t_ms - self.s2c_base[cs.idx] - self.lag_total[cs.idx]
            rel_gen = rel[0] if rel is not None else -1.0
            if due > rel_gen:
                newest = cs.history.newest_time(cube)
                if newest is not None:
                    # A short silence looks like loss and is extrapolated; a
                    # long one means the dead-band went quiet (the object
                    # stopped), so hold the newest sample instead.
                    horizon = self.comp.predictor_horizon_ms
                    if horizon is None or due - newest <= horizon:
                        target = max(due, newest)
                    else:
                        target = newest
                    pred = cs.history.predict(cube, target)
                    return Vec3(pred[0], pred[1], pred[2]), pred[3]
        if rel is not None:
            v = rel[1]
            return Vec3(v[0], v[1], v[2]), v[3]
        pos, rot = self.sc.cubes[cube]
        return pos, rot

    def _tick(self, t_us: int) -> None:
        sc = self.sc
        srv = self.server
        col = self.collector
        t_ms = t_us // 1000
        self.tick_count += 1
        col.record_tick()

        # server: resolve hold state, then kinematics
        if srv.held is not None:
            cube = srv.held
            if not all(srv.intents[cube]):
                srv.held = None
                self._release_cube(cube)
            else:
                n = len(srv.hips)
                sx = sum(h.x for h in srv.hips) / n
                sy = sum(h.y for h in srv.hips) / n
                sz = sum(h.z for h in srv.hips) / n
                if n >= 2:
                    a, b = srv.hips[0], srv.hips[1]
                    rot = math.atan2(b.y - a.y, b.x - a.x)
                else:
                    rot = srv.cube_rot[cube]
                srv.cube_pos[cube] = Vec3(sx, sy, sz)
                srv.cube_rot[cube] = rot
                srv.changed[cube] = True
        if srv.held is None:
            for cube in range(sc.n_cubes):
                if cube in srv.descending or not all(srv.intents[cube]):
                    continue
                center = srv.cube_pos[cube]
                if all(
                    (h.x - center.x) ** 2 + (h.y - center.y) ** 2 + (h.z - center.z) ** 2
                    <= self.gd2
                    for h in srv.hips
                ):
                    srv.held = cube
                    break
        for cube in list(srv.descending):
            target = srv.descending[cube]
            pos = srv.cube_pos[cube]
            z = pos.z - self.descent_per_tick
            if z <= target:
                z = target
                del srv.descending[cube]
            srv.cube_pos[cube] = Vec3(pos.x, pos.y, z)
            srv.changed[cube] = True

        # server: broadcast changed poses, dead-band suppressed per client
        q = self.quantum
        for cube in range(sc.n_cubes):
            if not srv.changed[cube] and not srv.need_initial:
                continue
            pos = srv.cube_pos[cube]
            rot = srv.cube_rot[cube]
            cells = (round_half_away(pos.x / q), round_half_away(pos.y / q),
                     round_half_away(pos.z / q), round_half_away(rot / q))
            values: tuple[float, ...] | None = None
            for k in range(sc.n_clients):
                if cells == srv.last_cells[k][cube]:
                    continue
                if values is None:
                    values = tuple(self._cell_value(c) for c in cells)
                pkt = UpdatePacket(
                    kind=UpdateKind.CUBE_POSE, seq=srv.cube_seq, send_time_ms=t_ms,
                    sender_id=0, object_id=cube, values=values,
                )
                srv.cube_seq += 1
                col.record_sent_seq("s2c")
                self._offer(pkt, True, k, t_us)
                srv.last_cells[k][cube] = cells
            srv.changed[cube] = False
        srv.need_initial = False

        # traces: ground truth rows
        sink = self.state_sink
        for cube in range(sc.n_cubes):
            pos = srv.cube_pos[cube]
            col.record_truth(cube, pos)
            if sink is not None:
                sink.write(f"{t_ms},cube{cube},{pos.x!r},{pos.y!r},{pos.z!r},"
                           f"{srv.cube_rot[cube]!r},TRUTH\n")

        # clients
        for cs in self.clients:
            hip = cs.cursor.at(t_ms)
            vel = (hip - cs.prev_hip).scaled(float(self.rate))

            cells = self._cells3(hip)
            if cells != cs.hip_cells:
                values = tuple(self._cell_value(c) for c in cells)
                pkt = UpdatePacket(
                    kind=UpdateKind.HIP_POS, seq=cs.hip_seq, send_time_ms=t_ms,
                    sender_id=cs.idx + 1, object_id=0, values=values,
                )
                cs.hip_seq += 1
                col.record_sent_seq("c2s")
                self._offer(pkt, False, cs.idx, t_us)
                cs.hip_cells = cells

            views = []
            for cube in range(sc.n_cubes):
                vpos, vrot = self._view(cs, cube, t_ms)
                views.append((vpos, vrot))
                col.record_view(cs.idx, cube, vpos)

            for cube in range(sc.n_cubes):
                d = hip - views[cube][0]
                near = d.x * d.x + d.y * d.y + d.z * d.z <= self.gd2
                if near != cs.near[cube]:
                    cs.near[cube] = near
                    self._send_key(cs, GRAB_CODE if near else RELEASE_CODE, cube, t_us)

            force = _ZERO
            for cube in range(sc.n_cubes):
                depth, normal = box_penetration(hip, views[cube][0], self.half)
                if depth > 0:
                    force = force + render_force(depth, normal, vel, cs.rtt_ms, self.comp)
                prev = cs.view_depth[cube]
                if depth > 0 and prev == 0:
                    col.record_contact_onset(cs.idx, float(t_ms))
                elif depth == 0 and prev > 0:
                    truth_depth, _ = box_penetration(hip, srv.cube_pos[cube], self.half)
                    if truth_depth > 0:
                        col.record_contact_loss(cs.idx)
                cs.view_depth[cube] = depth
            col.record_force(cs.idx, force)

            if sink is not None:
                sink.write(f"{t_ms},hip{cs.idx + 1},{hip.x!r},{hip.y!r},{hip.z!r},"
                           f"0.0,TRUTH\n")
                for cube in range(sc.n_cubes):
                    vpos, vrot = views[cube]
                    sink.write(f"{t_ms},cube{cube},{vpos.x!r},{vpos.y!r},{vpos.z!r},"
                               f"{vrot!r},CLIENT_VIEW_{cs.idx + 1}\n")
            cs.prev_hip = hip

        next_us = t_us + self.tick_us
        if next_us < self.duration_us:
            self._push(next_us, _PRIO_TICK, ())

    # -- main loop ------------------------------------------------------------

    def run(self) -> SimResult:
        if self.state_sink is not None:
            self.state_sink.write(STATE_HEADER)
        if self.duration_us > 0:
            self._push(0, _PRIO_TICK, ())
        while self.heap:
            t_us, prio, _ordinal, payload = heapq.heappop(self.heap)
            if t_us >= self.duration_us:
                break
            if prio == _PRIO_ARRIVAL:
                self._handle_arrival(payload)
            elif prio == _PRIO_RELEASE:
                client_idx, obj, gen, values = payload
                self._accept(self.clients[client_idx], obj, gen, values)
            elif prio == _PRIO_RETX:
                self._handle_retx((*payload, t_us))
            else:
                self._tick(t_us)
        channels = {}
        for k in range(self.sc.n_clients):
            channels[f"c{k + 1}>s"] = self.c2s_ch[k].counters()
        for k in range(self.sc.n_clients):
            channels[f"s>c{k + 1}"] = self.s2c_ch[k].counters()
        return SimResult(
            report=self.collector.finalize(),
            channels=channels,
            cube_poses=[(p, r) for p, r in zip(self.server.cube_pos, self.server.cube_rot)],
            ticks=self.tick_count,
        )


def run(scenario: Scenario, packet_sink: IO[str] | None = None,
        state_sink: IO[str] | None = None) -> SimResult:
    """Run one simulation.  Optional sinks receive the packet trace (wire
    lines prefixed with disposition, link, and microsecond timestamps) and
    the 1 kHz state trace (CSV of truth and per-client rendered views)."""
    return _Sim(scenario, packet_sink, state_sink).run()


# -- report regeneration from traces -----------------------------------------

def _parse_link(link: str) -> tuple[bool, int]:
    """-> (from_server, zero-based client index)"""
    if link.startswith("s>c"):
        return True, int(link[3:]) - 1
    if link.startswith("c") and link.endswith(">s"):
        return False, int(link[1:-2]) - 1
    raise ValueError(f"unrecognized link {link!r}")


def regenerate_report(scenario: Scenario, packet_lines: Iterable[str],
                      state_lines: Iterable[str]) -> MetricsReport:
    """Rebuild the full metrics report from the saved traces alone.

    Feeding the collector in the same order as the live run makes the
    regenerated report identical, float for float.
    """
    scenario.validate()
    col = _make_collector(scenario)
    duration_us = round(scenario.duration_s * scenario.tick_rate_hz) * \
        (1_000_000 // scenario.tick_rate_hz)

    deliveries: list[tuple[int, int, str, bool, int, UpdatePacket, int]] = []
    seq_high: dict[tuple[str, UpdateKind], int] = {}
    for line in packet_lines:
        if not line.strip():
            continue
        disp, link, offer_s, deliver_s, wire = line.split(" ", 4)
        pkt = decode_packet(wire.encode("ascii"))
        nbytes = len(wire)
        from_server, client_idx = _parse_link(link)
        direction = "s2c" if from_server else "c2s"
        offer_us = int(offer_s)
        col.record_offer(direction)
        if from_server:
            col.count_from_server_offer(offer_us, nbytes)
        key = (link, pkt.kind)
        high = seq_high.get(key)
        if high is None or pkt.seq > high:
            seq_high[key] = pkt.seq
            col.record_sent_seq(direction)
        if disp == "DELIVERED":
            deliver_us = int(deliver_s)
            if deliver_us < duration_us:
                deliveries.append((deliver_us, offer_us, link, from_server,
                                   client_idx, pkt, nbytes))
        elif disp == "DROP_LOSS":
            col.record_loss_drop(direction)
        elif disp != "DROP_CAPACITY":
            raise ValueError(f"unrecognized disposition {disp!r}")

    deliveries.sort(key=lambda d: (d[0], d[1]))
    windows: dict[tuple[str, UpdateKind], DedupWindow] = {}
    # (deliver_us, offer_us, rtt): a same-microsecond delivery was pushed
    # during the tick that sent it, so the tick never saw it
    rtt_events: list[list[tuple[int, int, float]]] = [[] for _ in range(scenario.n_clients)]
    for deliver_us, offer_us, link, from_server, client_idx, pkt, nbytes in deliveries:
        col.record_arrival(link, deliver_us)
        direction = "s2c" if from_server else "c2s"
        if not from_server:
            col.count_to_server_delivery(deliver_us, nbytes)
        elif pkt.kind is UpdateKind.CUBE_POSE:
            delay_ms = deliver_us / 1000.0 - pkt.send_time_ms
            col.record_decorator(client_idx, deliver_us / 1000.0, delay_ms)
            rtt_events[client_idx].append((deliver_us, offer_us, 2.0 * delay_ms))
        win = windows.setdefault((link, pkt.kind), DedupWindow())
        if win.receive(pkt.seq) is ReceiveDisposition.DELIVER:
            col.record_first_delivery(direction)

    # state trace -> per-tick world samples
    ticks: dict[int, dict] = {}
    for line in state_lines:
        line = line.strip()
        if not line or line.startswith("time_ms"):
            continue
        t_s, entity, xs, ys, zs, rots, source = line.split(",")
        t_ms = int(t_s)
        slot = ticks.setdefault(t_ms, {"truth": {}, "hips": {}, "views": {}})
        pos = Vec3(float(xs), float(ys), float(zs))
        if source == "TRUTH":
            if entity.startswith("cube"):
                slot["truth"][int(entity[4:])] = pos
            else:
                slot["hips"][int(entity[3:]) - 1] = pos
        else:
            k = int(source.rsplit("_", 1)[1]) - 1
            slot["views"][(k, int(entity[4:]))] = pos

    half = scenario.cube_size / 2.0
    comp = scenario.compensation
    rate = float(scenario.tick_rate_hz)
    prev_hip: list[Vec3 | None] = [None] * scenario.n_clients
    view_depth = [[0.0] * scenario.n_cubes for _ in range(scenario.n_clients)]
    rtt_ms = [0.0] * scenario.n_clients
    rtt_ptr = [0] * scenario.n_clients

    for t_ms in sorted(ticks):
        slot = ticks[t_ms]
        t_us = t_ms * 1000
        for k in range(scenario.n_clients):
            events = rtt_events[k]
            while rtt_ptr[k] < len(events) and (
                events[rtt_ptr[k]][0] < t_us
                or (events[rtt_ptr[k]][0] == t_us and events[rtt_ptr[k]][1] < t_us)
            ):
                rtt_ms[k] = events[rtt_ptr[k]][2]
                rtt_ptr[k] += 1
        for cube in range(scenario.n_cubes):
            col.record_truth(cube, slot["truth"][cube])
        for k in range(scenario.n_clients):
            hip = slot["hips"][k]
            vel = (hip - prev_hip[k]).scaled(rate) if prev_hip[k] is not None else _ZERO
            for cube in range(scenario.n_cubes):
                col.record_view(k, cube, slot["views"][(k, cube)])
            force = _ZERO
            for cube in range(scenario.n_cubes):
                depth, normal = box_penetration(hip, slot["views"][(k, cube)], half)
                if depth > 0:
                    force = force + render_force(depth, normal, vel, rtt_ms[k], comp)
                prev = view_depth[k][cube]
                if depth > 0 and prev == 0:
                    col.record_contact_onset(k, float(t_ms))
                elif depth == 0 and prev > 0:
                    truth_depth, _ = box_penetration(hip, slot["truth"][cube], half)
                    if truth_depth > 0:
                        col.record_contact_loss(k)
                view_depth[k][cube] = depth
            col.record_force(k, force)
            prev_hip[k] = hip

    return col.finalize()
