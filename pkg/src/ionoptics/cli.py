"""Command-line front end.

Subcommands:
  crystal   solve the ion chain and print positions and gaps
  design    full pipeline: pitch plan, lens-stack synthesis, per-channel
            wave simulation, crosstalk matrix; writes a JSON report
  sweep     tolerance sweeps of the worst-case channel; writes a CSV
            table (one row per grid point) and a JSON summary
  version   print the toolkit version

Exit codes: 0 success, 2 scenario parse or validation error, 3 invariant
violation (invalid field values, geometry, trapped rays), 4 infeasible
design targets, 5 convergence failure, 6 propagation-window or sampling
error. The IONOPTICS_OUTDIR environment variable sets the default
output directory for reports; flags override it.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
import time

import numpy as np

from . import __version__
from .crystal import solve_crystal
from .designer import (
    SWEEP_PRESETS,
    _propagate_to_plane,
    crosstalk_matrix,
    pitch_plan,
    simulate_channel,
    synthesize_lens_stack,
    tolerance_sweep,
)
from .gaussbeam import beam_from_mfd
from .errors import (
    ConvergenceError,
    FocusNotBracketedError,
    InfeasibleDesignError,
    IonOpticsError,
    PropagationWindowError,
    SamplingError,
    ScenarioError,
)
from .picmodel import WaveguideArraySpec, outcoupling_angle
from .report import (
    REPORT_SCHEMA_VERSION,
    UM,
    canonical_json,
    channel_section,
    crosstalk_section,
    crystal_section,
    mirror_section,
    pitch_plan_section,
    prescription_section,
    run_block,
    sweep_section,
    write_report,
)
from .scenario import Scenario, load_scenario
from .wavefield import make_gaussian_field, write_field_csv, write_field_sfld

EXIT_PARSE = 2
EXIT_INVARIANT = 3
EXIT_INFEASIBLE = 4
EXIT_CONVERGENCE = 5
EXIT_PROPAGATION = 6

SWEEP_CSV_COLUMNS = (
    "parameter",
    "value",
    "value_unit",
    "z_focus_um",
    "dz_focus_um",
    "mfd_x_um",
    "mfd_y_um",
    "dmfd_x_um",
    "dmfd_y_um",
    "centroid_x_um",
    "centroid_y_um",
    "dcentroid_x_um",
    "dcentroid_y_um",
    "clipped_fraction",
    "beam_slope_rad",
    "off_normal",
    "residual_tilt_deg",
)


def _out_dir() -> str:
    return os.environ.get("IONOPTICS_OUTDIR", ".")


def _out_path(flag_value, default_name: str) -> str:
    if flag_value:
        return flag_value
    return os.path.join(_out_dir(), default_name)


def _parse_grid(text: str):
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("grid must be nx,ny,pitch_um")
    try:
        nx, ny = int(parts[0]), int(parts[1])
        pitch = float(parts[2]) * UM
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}: {exc}") from exc
    return (nx, ny, pitch)


def _parse_param(text: str):
    parts = text.split(":")
    if len(parts) != 4:
        raise argparse.ArgumentTypeError(
            "param must be name:lo:hi:steps (angles deg, offsets um)"
        )
    name = parts[0]
    try:
        lo, hi, steps = float(parts[1]), float(parts[2]), int(parts[3])
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad param {text!r}: {exc}") from exc
    if name in ("lateral_offset", "z_offset"):
        lo, hi = lo * UM, hi * UM
    return {"parameter": name, "lo": lo, "hi": hi, "steps": steps}


def _build_pipeline(scenario: Scenario, grid_override=None):
    """Shared front half: crystal, pitch plan, array, prescription."""
    crystal = solve_crystal(scenario.trap)
    positions = pitch_plan(crystal, scenario.targets.magnification)
    array = WaveguideArraySpec(
        positions_m=positions,
        mode_mfd_m=scenario.mode_mfd_m,
        leakage_decay_per_m=scenario.leakage_decay_per_m,
        leakage_reference=scenario.leakage_reference,
    )
    out = outcoupling_angle(scenario.mirror)
    reach = float(np.max(np.abs(positions)))
    prescription = synthesize_lens_stack(
        scenario.targets,
        source_tilt=out.exit_angle_deg,
        chief_reach=reach,
    )
    grid = grid_override if grid_override is not None else scenario.grid
    return crystal, array, out, prescription, grid


def _report_skeleton(command: str, scenario: Scenario, wall_time: float) -> dict:
    return {
        "report_schema_version": REPORT_SCHEMA_VERSION,
        "command": command,
        "toolkit": {"name": "ionoptics", "version": __version__},
        "run": run_block(wall_time),
        "scenario": scenario.raw,
    }


def cmd_crystal(args) -> int:
    scenario = load_scenario(args.scenario)
    t0 = time.perf_counter()
    crystal = solve_crystal(scenario.trap)
    section = crystal_section(crystal)

    print(f"ion crystal: {scenario.trap.ion_count} ions, "
          f"{scenario.trap.axial_frequency_hz / 1e3:.1f} kHz axial")
    print(f"{'ion':>4}  {'position_um':>12}")
    for i, p in enumerate(section["positions_um"]):
        print(f"{i:>4}  {p:>12.4f}")
    print(f"{'pair':>4}  {'gap_um':>12}")
    for i, g in enumerate(section["gaps_um"]):
        print(f"{i:>4}  {g:>12.4f}")

    if args.report:
        data = _report_skeleton("crystal", scenario, time.perf_counter() - t0)
        data["crystal"] = section
        write_report(data, args.report)
        print(f"report: {args.report}")
    return 0


def cmd_design(args) -> int:
    scenario = load_scenario(args.scenario)
    t0 = time.perf_counter()
    crystal, array, out, prescription, grid = _build_pipeline(
        scenario, args.grid
    )

    channels = [
        simulate_channel(
            prescription, array, i, scenario.mirror,
            grid=grid, z_search=scenario.z_search,
        )
        for i in range(array.channel_count)
    ]
    xt = crosstalk_matrix(
        prescription, array, crystal, scenario.mirror,
        grid=grid, channel_focus=channels,
    )

    data = _report_skeleton("design", scenario, time.perf_counter() - t0)
    data["crystal"] = crystal_section(crystal)
    data["mirror"] = mirror_section(scenario.mirror, out)
    data["pitch_plan"] = pitch_plan_section(array.positions_m)
    data["prescription"] = prescription_section(prescription)
    data["channels"] = [channel_section(c) for c in channels]
    data["crosstalk"] = crosstalk_section(xt)
    data["run"]["wall_time_s"] = time.perf_counter() - t0

    path = _out_path(args.report, f"{scenario.name}_design_report.json")
    write_report(data, path)

    centre = int(np.argmin(np.abs(array.positions_m)))
    print(f"lens stack: f = {[f'{f * 1e6:.2f}' for f in prescription.focal_lengths]} um "
          f"at z = {[f'{z * 1e6:.2f}' for z in prescription.lens_positions]} um, "
          f"stack {prescription.stack_height * 1e6:.2f} um")
    print(f"centre channel focus: z = {channels[centre].z_focus * 1e6:.3f} um "
          f"(image distance {channels[centre].image_distance * 1e6:.3f} um)")
    print(f"worst nearest-neighbor crosstalk: "
          f"{data['crosstalk']['worst_nearest_neighbor_total_db']:.2f} dB")
    print(f"report: {path}")

    if args.dump_field:
        beam = beam_from_mfd(*array.mode_mfd_m, scenario.targets.wavelength)
        tilt = math.radians(out.exit_angle_deg)
        source = make_gaussian_field(
            beam, tilt=(0.0, tilt), grid=grid,
            center=(float(array.positions_m[centre]), 0.0),
        )
        field = _propagate_to_plane(
            source, prescription.elements, channels[centre].z_focus
        )
        if args.dump_field.endswith(".sfld"):
            write_field_sfld(field, args.dump_field)
        elif args.dump_field.endswith(".csv"):
            write_field_csv(field, args.dump_field)
        else:
            print("dump-field path must end in .sfld or .csv", file=sys.stderr)
            return EXIT_PARSE
        print(f"field dump: {args.dump_field}")
    return 0


def cmd_sweep(args) -> int:
    scenario = load_scenario(args.scenario)
    perturbations = list(scenario.sweeps) + [
        _parse_param(p) if isinstance(p, str) else p for p in (args.param or [])
    ]
    if not perturbations and not args.preset:
        print(
            "sweep needs scenario sweep definitions, --param, or --preset "
            f"(available presets: {', '.join(sorted(SWEEP_PRESETS))})",
            file=sys.stderr,
        )
        return EXIT_PARSE

    t0 = time.perf_counter()
    crystal, array, out, prescription, grid = _build_pipeline(
        scenario, args.grid
    )
    result = tolerance_sweep(
        prescription, array, scenario.mirror, perturbations,
        grid=grid, z_search=scenario.z_search, preset=args.preset,
    )

    data = _report_skeleton("sweep", scenario, time.perf_counter() - t0)
    data["mirror"] = mirror_section(scenario.mirror, out)
    data["prescription"] = prescription_section(prescription)
    data["sweep"] = sweep_section(result)
    data["run"]["wall_time_s"] = time.perf_counter() - t0

    json_path = _out_path(args.report, f"{scenario.name}_sweep_report.json")
    write_report(data, json_path)

    csv_path = args.csv or os.path.join(
        _out_dir(), f"{scenario.name}_sweep.csv"
    )
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(SWEEP_CSV_COLUMNS)
        for p in data["sweep"]["points"]:
            writer.writerow(
                [
                    p["parameter"],
                    f"{p['value']:.9g}",
                    p["value_unit"],
                    f"{p['z_focus_um']:.9g}",
                    f"{p['dz_focus_um']:.9g}",
                    f"{p['mfd_fit_um'][0]:.9g}",
                    f"{p['mfd_fit_um'][1]:.9g}",
                    f"{p['dmfd_um'][0]:.9g}",
                    f"{p['dmfd_um'][1]:.9g}",
                    f"{p['centroid_um'][0]:.9g}",
                    f"{p['centroid_um'][1]:.9g}",
                    f"{p['dcentroid_um'][0]:.9g}",
                    f"{p['dcentroid_um'][1]:.9g}",
                    f"{p['clipped_fraction']:.9g}",
                    f"{p['beam_slope_rad']:.9g}",
                    str(p["off_normal"]).lower(),
                    f"{p['residual_tilt_deg']:.9g}",
                ]
            )

    flagged = sum(1 for p in data["sweep"]["points"] if p["off_normal"])
    print(f"sweep: {len(data['sweep']['points'])} points on channel "
          f"{result.channel}, {flagged} flagged off-normal")
    print(f"report: {json_path}")
    print(f"table: {csv_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ionoptics",
        description="Design and verify multi-channel ion-addressing optics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_crystal = sub.add_parser("crystal", help="solve the ion chain")
    p_crystal.add_argument("scenario", help="scenario JSON path")
    p_crystal.add_argument("--report", help="write a JSON report here")
    p_crystal.set_defaults(func=cmd_crystal)

    p_design = sub.add_parser("design", help="run the full design pipeline")
    p_design.add_argument("scenario", help="scenario JSON path")
    p_design.add_argument("--report", help="JSON report path")
    p_design.add_argument(
        "--dump-field",
        help="write the centre-channel focus field (.sfld binary or .csv)",
    )
    p_design.add_argument(
        "--grid", type=_parse_grid, help="override grid: nx,ny,pitch_um"
    )
    p_design.set_defaults(func=cmd_design)

    p_sweep = sub.add_parser("sweep", help="tolerance sweeps")
    p_sweep.add_argument("scenario", help="scenario JSON path")
    p_sweep.add_argument("--report", help="JSON summary path")
    p_sweep.add_argument("--csv", help="CSV table path")
    p_sweep.add_argument(
        "--preset",
        help="named failure case (available: "
        + ", ".join(sorted(SWEEP_PRESETS)) + ")",
    )
    p_sweep.add_argument(
        "--param",
        action="append",
        help="extra sweep axis name:lo:hi:steps (angles deg, offsets um)",
    )
    p_sweep.add_argument(
        "--grid", type=_parse_grid, help="override grid: nx,ny,pitch_um"
    )
    p_sweep.set_defaults(func=cmd_sweep)

    p_version = sub.add_parser("version", help="print the toolkit version")
    p_version.set_defaults(func=lambda args: print(f"ionoptics {__version__}") or 0)

    return parser


def _exit_code(exc: IonOpticsError) -> int:
    if isinstance(exc, ScenarioError):
        return EXIT_PARSE
    if isinstance(exc, InfeasibleDesignError):
        return EXIT_INFEASIBLE
    if isinstance(exc, (ConvergenceError, FocusNotBracketedError)):
        return EXIT_CONVERGENCE
    if isinstance(exc, (PropagationWindowError, SamplingError)):
        return EXIT_PROPAGATION
    return EXIT_INVARIANT


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except IonOpticsError as exc:
        stage = args.command
        print(f"error in {stage}: {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
