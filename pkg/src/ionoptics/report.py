"""Run reports: canonical JSON that is byte-identical across runs.

Reports are serialized with sorted keys, two-space indentation and a
trailing newline, after converting every numpy scalar or array to plain
Python. The only nondeterministic content allowed is the "run" block
(timestamp and wall time); reproducibility comparisons drop that block
and nothing else.
"""

from __future__ import annotations

import datetime
import json
import math
from importlib import resources

import jsonschema
import numpy as np

from .crystal import IonCrystal, ion_spacings
from .designer import (
    ChannelFocus,
    CrosstalkReport,
    LensStackPrescription,
    SweepReport,
)
from .errors import InvalidInputError
from .picmodel import OutcouplingResult, TirMirrorSpec, tir_critical_angle

REPORT_SCHEMA_VERSION = 1
UM = 1e-6


def to_plain(value):
    """Recursively convert numpy containers and scalars to JSON types."""
    if isinstance(value, dict):
        return {str(k): to_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_plain(v) for v in value.tolist()]
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, float) and not math.isfinite(value):
        raise InvalidInputError("reports must not contain NaN or infinity")
    return value


def canonical_json(data: dict) -> str:
    return json.dumps(to_plain(data), sort_keys=True, indent=2) + "\n"


def report_schema() -> dict:
    path = resources.files("ionoptics.schemas").joinpath("report.schema.json")
    with path.open("r", encoding="utf-8") as fh:
        return json.load(fh)


def validate_report(data: dict) -> None:
    try:
        jsonschema.validate(to_plain(data), report_schema())
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "report"
        raise InvalidInputError(
            f"report violates its schema at {path}: {exc.message}"
        ) from exc


def write_report(data: dict, path) -> None:
    validate_report(data)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(canonical_json(data))


def run_block(wall_time_s: float) -> dict:
    return {
        "generated_at_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "wall_time_s": float(wall_time_s),
    }


def crystal_section(crystal: IonCrystal) -> dict:
    return {
        "length_scale_um": crystal.length_scale_m / UM,
        "positions_um": [p / UM for p in crystal.positions_m],
        "gaps_um": [g / UM for g in ion_spacings(crystal)],
    }


def mirror_section(mirror: TirMirrorSpec, outcoupling: OutcouplingResult) -> dict:
    return {
        "critical_angle_deg": tir_critical_angle(mirror),
        "internal_tilt_deg": outcoupling.internal_tilt_deg,
        "exit_angle_deg": outcoupling.exit_angle_deg,
        "tir_satisfied": outcoupling.tir_satisfied,
    }


def pitch_plan_section(positions_m: np.ndarray) -> dict:
    positions = np.asarray(positions_m, dtype=float)
    return {
        "positions_um": [p / UM for p in positions],
        "gaps_um": [g / UM for g in np.diff(positions)],
    }


def prescription_section(prescription: LensStackPrescription) -> dict:
    elements = []
    for row in prescription.element_table():
        entry = {"z_um": row["z_m"] / UM, "kind": row["kind"]}
        if "focal_length_m" in row:
            entry["focal_length_um"] = row["focal_length_m"] / UM
        if "radius_m" in row:
            entry["radius_um"] = row["radius_m"] / UM
        if "tilt_x_deg" in row:
            entry["tilt_x_deg"] = row["tilt_x_deg"]
            entry["tilt_y_deg"] = row["tilt_y_deg"]
        elements.append(entry)
    return {
        "elements": elements,
        "focal_lengths_um": [f / UM for f in prescription.focal_lengths],
        "lens_positions_um": [z / UM for z in prescription.lens_positions],
        "aperture_radii_um": [r / UM for r in prescription.aperture_radii],
        "stack_height_um": prescription.stack_height / UM,
        "source_tilt_deg": prescription.source_tilt_deg,
        "predicted": {
            "magnification": list(prescription.predicted_magnification),
            "image_distance_um": prescription.predicted_image_distance / UM,
            "numerical_aperture": prescription.predicted_na,
        },
    }


def channel_section(focus: ChannelFocus) -> dict:
    return {
        "channel": focus.channel,
        "waveguide_position_um": focus.waveguide_position / UM,
        "z_focus_um": focus.z_focus / UM,
        "image_distance_um": focus.image_distance / UM,
        "mfd_fit_um": [v / UM for v in focus.mfd_fit],
        "mfd_moment_um": [v / UM for v in focus.mfd_moment],
        "centroid_um": [v / UM for v in focus.centroid],
        "clipped_fraction": focus.clipped_fraction,
        "fit_failed": focus.fit_failed,
        "beam_slope_rad": focus.beam_slope,
        "off_normal": focus.off_normal,
        "at_shared_plane": focus.at_shared_plane,
    }


def crosstalk_section(report: CrosstalkReport) -> dict:
    neighbors = [
        c for c in report.contributions if abs(c["ion_i"] - c["ion_j"]) == 1
    ]
    worst_total = max((c["total_db"] for c in neighbors), default=0.0)
    worst_optical = max((c["optical_db"] for c in neighbors), default=0.0)
    worst_leak = max(
        (c["leakage_db"] for c in report.contributions), default=-200.0
    )
    return {
        "matrix_db": report.matrix_db,
        "contributions": list(report.contributions),
        "ion_positions_um": [p / UM for p in report.ion_positions],
        "evaluation_z_um": report.evaluation_z / UM,
        "alignment_scale": report.alignment_scale,
        "alignment_residual_um": report.alignment_residual / UM,
        "worst_nearest_neighbor_total_db": worst_total,
        "worst_nearest_neighbor_optical_db": worst_optical,
        "worst_leakage_db": worst_leak,
    }


def sweep_point_section(point) -> dict:
    offsets_metres = point.parameter in ("lateral_offset", "z_offset")
    return {
        "parameter": point.parameter,
        "value": point.value / UM if offsets_metres else point.value,
        "value_unit": "um" if offsets_metres else "deg",
        "z_focus_um": point.z_focus / UM,
        "image_distance_um": point.image_distance / UM,
        "mfd_fit_um": [v / UM for v in point.mfd_fit],
        "centroid_um": [v / UM for v in point.centroid],
        "clipped_fraction": point.clipped_fraction,
        "beam_slope_rad": point.beam_slope,
        "off_normal": point.off_normal,
        "dz_focus_um": point.dz_focus / UM,
        "dmfd_um": [v / UM for v in point.dmfd],
        "dcentroid_um": [v / UM for v in point.dcentroid],
        "residual_tilt_deg": point.residual_tilt_deg,
    }


def sweep_section(report: SweepReport) -> dict:
    return {
        "channel": report.channel,
        "baseline": channel_section(report.baseline),
        "points": [sweep_point_section(p) for p in report.points],
    }
