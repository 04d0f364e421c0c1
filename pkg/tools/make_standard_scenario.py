#!/usr/bin/env python3
"""Generate the bundled standard scenario: a 120 s two-client, three-cube
stacking session.

Per cube: approach and grip, a 21.5 s two-handed orbit (rotating the held
cube), a short carry to the stack site, then two very high lift-and-drop
cycles that let the cube free-fall onto the stack, and a fast transfer to
the next cube.  Timing is kept in integer milliseconds so waypoint times
are exact.  Held-phase speeds stay well under the grab-range/view-lag
limit so the clients never lose their grip to transport delay.
"""

import math
import os

S = (0.0, 0.0)                       # stack site
CUBES = [(-0.55, -0.35), (0.62, -0.35), (0.0, 0.62)]
Z0 = 0.25                            # resting center height (cube size 0.5)
GRIPS = {-1: 0.026, 1: 0.034}        # per-client grip radius; asymmetric so the
                                     # two hips cross quantization cells at
                                     # different times
STAGE = 0.45                         # staging radial offset (outside grab range)
TOP = 6.25                           # center height at release
LIFT_SPEED = 25.0                    # units/s while hoisting (held)
OMEGA = 0.358                        # orbit angular rate, rad/s
ORBIT_MS = 21_500
ORBIT_STEP_MS = 100
DROPS = 2
CUBE_PERIOD_MS = 38_000
REST = (0.9, 1.0)                    # (|x|, z) park position after the last cube


def u(theta):
    return math.cos(theta), math.sin(theta)


def build_client(sign: int):
    wps = []
    grip = GRIPS[sign]

    def wp(t_ms, x, y, z):
        wps.append((t_ms, x, y, z))

    theta_end = OMEGA * (ORBIT_MS / 1000.0)
    ue = u(theta_end)
    for i, (ax, ay) in enumerate(CUBES):
        T = CUBE_PERIOD_MS * i
        zi = Z0 + 0.5 * i
        fall_ms = round((TOP - zi) * 1000)
        lift_ms = round(fall_ms / LIFT_SPEED)
        cycle_ms = fall_ms + 740

        wp(T, ax + sign * STAGE, ay, Z0)
        wp(T + 500, ax + sign * STAGE, ay, Z0)
        wp(T + 560, ax + sign * grip, ay, Z0)
        wp(T + 1200, ax + sign * grip, ay, Z0)
        for step in range(1, ORBIT_MS // ORBIT_STEP_MS + 1):
            t = T + 1200 + step * ORBIT_STEP_MS
            ux, uy = u(OMEGA * (step * ORBIT_STEP_MS / 1000.0))
            wp(t, ax + sign * grip * ux, ay + sign * grip * uy, Z0)
        gx, gy = S[0] + sign * grip * ue[0], S[1] + sign * grip * ue[1]
        sx, sy = S[0] + sign * STAGE * ue[0], S[1] + sign * STAGE * ue[1]
        wp(T + 22_820, gx, gy, zi)              # carry to the stack site
        wp(T + 23_100, gx, gy, zi)

        for c in range(DROPS):
            t0 = T + 23_100 + c * cycle_ms
            wp(t0 + lift_ms, gx, gy, TOP)       # lift (held: stay slow enough
            wp(t0 + lift_ms + 40, sx, sy, TOP)  #  for the lagged view) -> release
            wp(t0 + lift_ms + 90, sx, sy, zi)   # dive back down, clear of the fall
            t_land = t0 + lift_ms + 90 + fall_ms  # landing, with release slack
            wp(t_land + 100, sx, sy, zi)        # wait out the fall
            if c < DROPS - 1:
                wp(t_land + 170, gx, gy, zi)    # radial in -> grab
                wp(t0 + cycle_ms, gx, gy, zi)   # hold grip until the next lift

        # transfer to the next staging area (or park)
        tt = t_land + 100
        wp(tt + 80, sx, sy, 1.9)
        if i + 1 < len(CUBES):
            nx, ny = CUBES[i + 1]
            wp(tt + 220, nx + sign * STAGE, ny, 1.9)
            wp(tt + 300, nx + sign * STAGE, ny, Z0)
        else:
            wp(tt + 220, sign * REST[0], REST[0], REST[1])
    return wps


def main():
    lines = [
        "# Standard workload: two clients stack three cubes in 120 s.",
        "# Grip-orbit phases rotate each held cube; two very high drops per cube",
        "# let it free-fall onto the stack.",
        "",
        "[run]",
        "duration_s = 120.0",
        "seed = 7",
        "tick_rate_hz = 1000",
        "grab_distance = 0.35",
        "cube_size = 0.5",
        "interval_s = 10.0",
        "force_threshold = 1.0",
        "",
        "[channel.c2s]",
        "base_delay_ms = 2.0",
        "jitter_stddev_ms = 0.0",
        "loss_prob = 0.0",
        "capacity_bps = unlimited",
        "capacity_mode = DROP",
        "",
        "[channel.s2c]",
        "base_delay_ms = 2.0",
        "jitter_stddev_ms = 0.0",
        "loss_prob = 0.0",
        "capacity_bps = unlimited",
        "capacity_mode = DROP",
        "",
        "[compensation]",
        "smoothing_lag_ms = 0.0",
        "fec_redundancy = 1",
        "predictor_enabled = false",
        "predictor_horizon_ms = 3.0",
        "delay_equalization_enabled = false",
        "reliable_key_events = true",
        "rto_ms = 40.0",
        "max_retries = 5",
        "stiffness_k0 = 300.0",
        "stiffness_alpha = 10.0",
        "damping_b = 0.0",
        "",
        "[quantizer]",
        "quantum = 0.0001",
        "decimals = 12",
        "",
    ]
    for idx, sign in ((1, -1), (2, 1)):
        lines.append(f"[trajectory.client{idx}]")
        for t_ms, x, y, z in build_client(sign):
            lines.append(f"{t_ms} {x!r} {y!r} {z!r}")
        lines.append("")
    lines.append("[cubes]")
    for cx, cy in CUBES:
        lines.append(f"{cx!r} {cy!r} {Z0!r} 0.0")
    lines.append("")

    out = os.path.join(os.path.dirname(__file__), "..", "src", "hapticsim",
                       "data", "standard.scn")
    os.makedirs(os.path.dirname(out), exist_ok=True)
    with open(out, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines))
    print(f"wrote {os.path.normpath(out)} ({len(lines)} lines)")


if __name__ == "__main__":
    main()
