"""Plain-text scenario files: ``[section]`` headers with ``key = value``
pairs, bare waypoint lines inside trajectory sections, and pose lines in
the cubes section.  Unknown sections and keys are rejected; missing keys
take the documented defaults; section order does not matter.

Scenario files are the reproducibility unit: one file plus a seed pins an
entire run.
"""

from __future__ import annotations

from importlib import resources

from .channel import CapacityMode, ChannelConfig
from .compensation import CompensationConfig
from .engine import Scenario, Waypoint
from .statemodel import QuantizerConfig, Vec3


class ScenarioError(ValueError):
    """Scenario text did not parse or validate; the message names the
    offending line and key where possible."""


def _to_float(text: str) -> float:
    return float(text)


def _to_int(text: str) -> int:
    return int(text, 10)


def _to_bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _to_capacity(text: str):
    if text.lower() == "unlimited":
        return None
    return float(text)


def _to_mode(text: str) -> CapacityMode:
    try:
        return CapacityMode[text.upper()]
    except KeyError:
        raise ValueError(f"expected DROP or QUEUE, got {text!r}") from None


def _to_opt_float(text: str):
    if text.lower() in ("none", "default"):
        return None
    return float(text)


# key -> (converter, range predicate, requirement text)
_RUN_KEYS = {
    "duration_s": (_to_float, lambda v: v >= 0, ">= 0"),
    "seed": (_to_int, lambda v: True, ""),
    "tick_rate_hz": (_to_int, lambda v: v > 0, "> 0"),
    "grab_distance": (_to_float, lambda v: v > 0, "> 0"),
    "cube_size": (_to_float, lambda v: v > 0, "> 0"),
    "interval_s": (_to_float, lambda v: v > 0, "> 0"),
    "force_threshold": (_to_float, lambda v: v > 0, "> 0"),
}

_CHANNEL_KEYS = {
    "base_delay_ms": (_to_float, lambda v: v >= 0, ">= 0"),
    "jitter_stddev_ms": (_to_float, lambda v: v >= 0, ">= 0"),
    "loss_prob": (_to_float, lambda v: 0.0 <= v <= 1.0, "in [0, 1]"),
    "capacity_bps": (_to_capacity, lambda v: v is None or v > 0, "> 0 or 'unlimited'"),
    "capacity_mode": (_to_mode, lambda v: True, ""),
    "max_queue_ms": (_to_float, lambda v: v >= 0, ">= 0"),
    "bucket_bytes": (_to_opt_float, lambda v: v is None or v > 0, "> 0 or 'default'"),
}

_COMPENSATION_KEYS = {
    "smoothing_lag_ms": (_to_float, lambda v: v >= 0, ">= 0"),
    "fec_redundancy": (_to_int, lambda v: v >= 1, ">= 1"),
    "predictor_enabled": (_to_bool, lambda v: True, ""),
    "predictor_horizon_ms": (_to_opt_float, lambda v: v is None or v >= 0, ">= 0 or 'none'"),
    "delay_equalization_enabled": (_to_bool, lambda v: True, ""),
    "reliable_key_events": (_to_bool, lambda v: True, ""),
    "rto_ms": (_to_float, lambda v: v > 0, "> 0"),
    "max_retries": (_to_int, lambda v: v >= 0, ">= 0"),
    "stiffness_k0": (_to_float, lambda v: v > 0, "> 0"),
    "stiffness_alpha": (_to_float, lambda v: v >= 0, ">= 0"),
    "damping_b": (_to_float, lambda v: v >= 0, ">= 0"),
}

_QUANTIZER_KEYS = {
    "quantum": (_to_float, lambda v: v > 0, "> 0"),
    "decimals": (_to_int, lambda v: 1 <= v <= 15, "in [1, 15]"),
}

_KV_SECTIONS = {
    "run": _RUN_KEYS,
    "channel.c2s": _CHANNEL_KEYS,
    "channel.s2c": _CHANNEL_KEYS,
    "compensation": _COMPENSATION_KEYS,
    "quantizer": _QUANTIZER_KEYS,
}

_LINE_SECTIONS = ("trajectory.client1", "trajectory.client2", "cubes")


def _parse_raw(text: str) -> tuple[dict, dict]:
    kv: dict[str, dict[str, tuple[str, int]]] = {name: {} for name in _KV_SECTIONS}
    line_sections: dict[str, list[tuple[int, str]]] = {name: [] for name in _LINE_SECTIONS}
    section: str | None = None
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if name not in _KV_SECTIONS and name not in _LINE_SECTIONS:
                raise ScenarioError(f"line {line_no}: unknown section [{name}]")
            section = name
            continue
        if section is None:
            raise ScenarioError(f"line {line_no}: content before any [section] header")
        if section in _LINE_SECTIONS:
            line_sections[section].append((line_no, line))
            continue
        if "=" not in line:
            raise ScenarioError(f"line {line_no}: expected 'key = value' in [{section}]")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _KV_SECTIONS[section]:
            raise ScenarioError(f"line {line_no}: unknown key {key!r} in [{section}]")
        kv[section][key] = (value, line_no)
    return kv, line_sections


def _apply_overrides(kv: dict, overrides) -> None:
    for spec in overrides:
        if "=" not in spec:
            raise ScenarioError(f"override {spec!r}: expected section.key=value")
        dotted, _, value = spec.partition("=")
        dotted = dotted.strip()
        if "." not in dotted:
            raise ScenarioError(f"override {spec!r}: expected section.key=value")
        section, _, key = dotted.rpartition(".")
        if section not in _KV_SECTIONS:
            raise ScenarioError(f"override {spec!r}: unknown section {section!r}")
        if key not in _KV_SECTIONS[section]:
            raise ScenarioError(f"override {spec!r}: unknown key {key!r} in [{section}]")
        kv[section][key] = (value.strip(), 0)


def _convert_section(section: str, kv: dict) -> dict:
    out = {}
    for key, (value, line_no) in kv[section].items():
        converter, valid, requirement = _KV_SECTIONS[section][key]
        where = f"line {line_no}" if line_no else "override"
        try:
            converted = converter(value)
        except ValueError as exc:
            raise ScenarioError(f"{where}: bad value for {key!r}: {exc}") from None
        if not valid(converted):
            raise ScenarioError(
                f"{where}: {key} = {value} out of range (must be {requirement})"
            )
        out[key] = converted
    return out


def _parse_vector_lines(name: str, lines: list[tuple[int, str]], n_fields: int):
    rows = []
    for line_no, line in lines:
        parts = line.split()
        if len(parts) != n_fields:
            raise ScenarioError(
                f"line {line_no}: [{name}] lines need {n_fields} numbers, got {len(parts)}"
            )
        try:
            rows.append((line_no, [float(p) for p in parts]))
        except ValueError:
            raise ScenarioError(f"line {line_no}: non-numeric field in [{name}]") from None
    return rows


def parse_scenario(text: str, overrides=()) -> Scenario:
    """Parse scenario text, apply ``section.key=value`` overrides left to
    right, and return a validated scenario."""
    kv, line_sections = _parse_raw(text)
    _apply_overrides(kv, overrides)

    run_kv = _convert_section("run", kv)
    comp_kv = _convert_section("compensation", kv)
    quant_kv = _convert_section("quantizer", kv)

    try:
        compensation = CompensationConfig(**comp_kv)
        quantizer = QuantizerConfig(**quant_kv)
        channel_cfgs = {
            name: ChannelConfig(**_convert_section(name, kv))
            for name in ("channel.c2s", "channel.s2c")
        }
    except ValueError as exc:
        raise ScenarioError(str(exc)) from None

    trajectories = []
    for name in ("trajectory.client1", "trajectory.client2"):
        lines = line_sections[name]
        if not lines:
            continue
        if name == "trajectory.client2" and not trajectories:
            raise ScenarioError("[trajectory.client2] given without [trajectory.client1]")
        script = []
        last_t = None
        for line_no, fields in _parse_vector_lines(name, lines, 4):
            t_ms, x, y, z = fields
            if last_t is not None and t_ms <= last_t:
                raise ScenarioError(
                    f"line {line_no}: waypoint times must be strictly increasing"
                )
            last_t = t_ms
            script.append(Waypoint(t_ms, Vec3(x, y, z)))
        trajectories.append(script)

    cubes = []
    for _line_no, fields in _parse_vector_lines("cubes", line_sections["cubes"], 4):
        x, y, z, rot = fields
        cubes.append((Vec3(x, y, z), rot))

    scenario = Scenario(compensation=compensation, quantizer=quantizer, **run_kv)
    if trajectories:
        scenario.trajectories = trajectories
    if cubes:
        scenario.cubes = cubes
    n = scenario.n_clients
    scenario.c2s = [channel_cfgs["channel.c2s"]] * n
    scenario.s2c = [channel_cfgs["channel.s2c"]] * n
    try:
        scenario.validate()
    except ValueError as exc:
        raise ScenarioError(str(exc)) from None
    return scenario


def _fmt(value) -> str:
    if value is None:
        return "unlimited"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, CapacityMode):
        return value.value
    return repr(value)


def serialize_scenario(scenario: Scenario) -> str:
    """Canonical text form; parsing it back yields an equal scenario.

    Per-client channel configs collapse onto the two channel sections, so
    scenarios built through the API with per-client differences are not
    representable and raise.
    """
    for cfgs in (scenario.c2s, scenario.s2c):
        if any(cfg != cfgs[0] for cfg in cfgs):
            raise ValueError("per-client channel differences have no file form")
    if scenario.n_clients > 2:
        raise ValueError("scenario files support at most two clients")
    comp = scenario.compensation
    lines = [
        "[run]",
        f"duration_s = {scenario.duration_s!r}",
        f"seed = {scenario.seed}",
        f"tick_rate_hz = {scenario.tick_rate_hz}",
        f"grab_distance = {scenario.grab_distance!r}",
        f"cube_size = {scenario.cube_size!r}",
        f"interval_s = {scenario.interval_s!r}",
        f"force_threshold = {scenario.force_threshold!r}",
        "",
    ]
    for name, cfg in (("channel.c2s", scenario.c2s[0]), ("channel.s2c", scenario.s2c[0])):
        lines += [
            f"[{name}]",
            f"base_delay_ms = {cfg.base_delay_ms!r}",
            f"jitter_stddev_ms = {cfg.jitter_stddev_ms!r}",
            f"loss_prob = {cfg.loss_prob!r}",
            f"capacity_bps = {_fmt(cfg.capacity_bps)}",
            f"capacity_mode = {cfg.capacity_mode.value}",
            f"max_queue_ms = {cfg.max_queue_ms!r}",
            f"bucket_bytes = {'default' if cfg.bucket_bytes is None else repr(cfg.bucket_bytes)}",
            "",
        ]
    lines += [
        "[compensation]",
        f"smoothing_lag_ms = {comp.smoothing_lag_ms!r}",
        f"fec_redundancy = {comp.fec_redundancy}",
        f"predictor_enabled = {_fmt(comp.predictor_enabled)}",
        f"predictor_horizon_ms = {'none' if comp.predictor_horizon_ms is None else repr(comp.predictor_horizon_ms)}",
        f"delay_equalization_enabled = {_fmt(comp.delay_equalization_enabled)}",
        f"reliable_key_events = {_fmt(comp.reliable_key_events)}",
        f"rto_ms = {comp.rto_ms!r}",
        f"max_retries = {comp.max_retries}",
        f"stiffness_k0 = {comp.stiffness_k0!r}",
        f"stiffness_alpha = {comp.stiffness_alpha!r}",
        f"damping_b = {comp.damping_b!r}",
        "",
        "[quantizer]",
        f"quantum = {scenario.quantizer.quantum!r}",
        f"decimals = {scenario.quantizer.decimals}",
        "",
    ]
    for k, script in enumerate(scenario.trajectories, start=1):
        lines.append(f"[trajectory.client{k}]")
        for w in script:
            lines.append(f"{w.t_ms!r} {w.pos.x!r} {w.pos.y!r} {w.pos.z!r}")
        lines.append("")
    lines.append("[cubes]")
    for pos, rot in scenario.cubes:
        lines.append(f"{pos.x!r} {pos.y!r} {pos.z!r} {rot!r}")
    lines.append("")
    return "\n".join(lines)


def load_scenario(path: str, overrides=()) -> Scenario:
    with open(path, "r", encoding="ascii") as fh:
        return parse_scenario(fh.read(), overrides)


def standard_scenario(overrides=()) -> Scenario:
    """The bundled 120 s two-client, three-cube stacking workload."""
    text = resources.files("hapticsim.data").joinpath("standard.scn").read_text("ascii")
    return parse_scenario(text, overrides)


def standard_scenario_text() -> str:
    return resources.files("hapticsim.data").joinpath("standard.scn").read_text("ascii")
