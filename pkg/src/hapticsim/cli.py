"""Command-line front end: single runs and parameter sweeps.

``run`` executes one scenario and writes report.csv, report.txt,
packets.trace, and state.csv under --out.  ``sweep`` repeats a run over a
parameter grid, one subdirectory per cell, plus a sweep.csv summary.
Exit codes: 0 success, 1 validation failure, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import itertools
import os
import sys

from .engine import SimResult, run
from .metrics import render_table, report_csv_rows
from .scenario_io import ScenarioError, load_scenario, serialize_scenario


def _write_outputs(out_dir: str, scenario, result: SimResult,
                   packet_text: str, state_text: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "report.csv"), "w", encoding="ascii") as fh:
        fh.write("metric,value\n")
        for key, value in report_csv_rows(result.report):
            fh.write(f"{key},{value}\n")
    with open(os.path.join(out_dir, "report.txt"), "w", encoding="ascii") as fh:
        fh.write(render_table(result.report, scenario.quantizer.quantum))
    with open(os.path.join(out_dir, "packets.trace"), "w", encoding="ascii") as fh:
        fh.write(packet_text)
    with open(os.path.join(out_dir, "state.csv"), "w", encoding="ascii") as fh:
        fh.write(state_text)


def _execute(scenario, out_dir: str) -> SimResult:
    import io

    packet_sink = io.StringIO()
    state_sink = io.StringIO()
    result = run(scenario, packet_sink=packet_sink, state_sink=state_sink)
    _write_outputs(out_dir, scenario, result, packet_sink.getvalue(), state_sink.getvalue())
    return result


def _cmd_run(args) -> int:
    overrides = list(args.override)
    if args.seed is not None:
        overrides.append(f"run.seed={args.seed}")
    scenario = load_scenario(args.scenario, overrides)
    sys.stdout.write("# effective scenario\n")
    sys.stdout.write(serialize_scenario(scenario))
    result = _execute(scenario, args.out)
    report = result.report
    sys.stdout.write(
        f"done: {result.ticks} ticks, "
        f"{report.total_avg_pps:.1f} pkts/s total "
        f"(to server {report.to_server.avg_pps:.1f}, "
        f"from server {report.from_server.avg_pps:.1f}); outputs in {args.out}\n"
    )
    return 0


def _parse_params(specs) -> list[tuple[str, list[str]]]:
    grid = []
    for spec in specs:
        if "=" not in spec:
            raise ScenarioError(f"--param {spec!r}: expected section.key=v1,v2,...")
        dotted, _, values = spec.partition("=")
        choices = [v.strip() for v in values.split(",") if v.strip()]
        if not choices:
            raise ScenarioError(f"--param {spec!r}: no values given")
        grid.append((dotted.strip(), choices))
    return grid


def _cmd_sweep(args) -> int:
    base_overrides = list(args.override)
    if args.seed is not None:
        base_overrides.append(f"run.seed={args.seed}")
    grid = _parse_params(args.param)
    os.makedirs(args.out, exist_ok=True)
    summary_rows = []
    for combo in itertools.product(*(choices for _, choices in grid)):
        cell_overrides = [f"{key}={value}" for (key, _), value in zip(grid, combo)]
        cell_name = ",".join(f"{key}={value}" for (key, _), value in zip(grid, combo))
        scenario = load_scenario(args.scenario, base_overrides + cell_overrides)
        cell_dir = os.path.join(args.out, cell_name)
        result = _execute(scenario, cell_dir)
        report = result.report
        summary_rows.append((
            cell_name,
            f"{report.total_avg_pps!r}",
            f"{report.to_server.avg_pps!r}",
            f"{report.from_server.avg_pps!r}",
            f"{report.to_server.avg_packet_bytes!r}",
            f"{report.from_server.avg_packet_bytes!r}",
            f"{report.loss_post_fec['c2s']!r}",
            f"{report.loss_post_fec['s2c']!r}",
        ))
        sys.stdout.write(f"cell {cell_name}: total {report.total_avg_pps:.1f} pkts/s\n")
    with open(os.path.join(args.out, "sweep.csv"), "w", encoding="ascii") as fh:
        fh.write("cell,total_avg_pps,to_server_avg_pps,from_server_avg_pps,"
                 "to_server_avg_bytes,from_server_avg_bytes,"
                 "loss_post_fec_c2s,loss_post_fec_s2c\n")
        for row in summary_rows:
            fh.write(",".join(row) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hapticsim",
        description="Deterministic haptic virtual-environment network simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute one scenario")
    run_p.add_argument("scenario", help="path to a scenario file")
    run_p.add_argument("--seed", type=int, default=None, help="override run.seed")
    run_p.add_argument("--out", default="out", help="output directory")
    run_p.add_argument("--override", action="append", default=[],
                       metavar="SECTION.KEY=VALUE",
                       help="override a scenario value (repeatable, applied in order)")
    run_p.set_defaults(func=_cmd_run)

    sweep_p = sub.add_parser("sweep", help="run a parameter grid")
    sweep_p.add_argument("scenario")
    sweep_p.add_argument("--param", action="append", required=True,
                         metavar="SECTION.KEY=V1,V2,...",
                         help="axis of the sweep grid (repeatable)")
    sweep_p.add_argument("--seed", type=int, default=None)
    sweep_p.add_argument("--out", default="out")
    sweep_p.add_argument("--override", action="append", default=[])
    sweep_p.set_defaults(func=_cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except Exception as exc:  # noqa: BLE001 - surface anything else as a runtime failure
        sys.stderr.write(f"runtime failure: {exc!r}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
