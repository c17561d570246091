"""Scenario files: one JSON document describing a complete design problem.

A scenario bundles the trap (ion species, axial frequency, ion count),
the imaging targets, the out-coupling mirror, optional waveguide-array
overrides, the wave-simulation grid, and optional tolerance sweeps.
Lengths are micrometres, angles degrees and frequencies hertz in the
file; everything is converted to SI here. Unknown keys are rejected so
that typos fail loudly instead of silently using defaults.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from importlib import resources
from typing import Optional

import jsonschema

from .crystal import TrapSpec
from .designer import DesignTargets
from .errors import ScenarioError
from .picmodel import TirMirrorSpec

UM = 1e-6


@dataclass(frozen=True)
class Scenario:
    """Validated, SI-converted scenario ready for the pipeline."""

    name: str
    comment: str
    trap: TrapSpec
    targets: DesignTargets
    mirror: TirMirrorSpec
    mode_mfd_m: tuple[float, float]
    leakage_decay_per_m: float
    leakage_reference: tuple[float, float]
    grid: tuple[int, int, float]
    z_search: Optional[tuple[float, float, int]]
    sweeps: tuple
    raw: dict


def scenario_schema() -> dict:
    path = resources.files("ionoptics.schemas").joinpath("scenario.schema.json")
    with path.open("r", encoding="utf-8") as fh:
        return json.load(fh)


def parse_scenario(data: dict, name_hint: str = "scenario") -> Scenario:
    """Validate a decoded scenario document and convert units to SI."""
    try:
        jsonschema.validate(data, scenario_schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "(document root)"
        raise ScenarioError(f"invalid scenario at {where}: {exc.message}") from exc

    trap_d = data["trap"]
    trap = TrapSpec(
        ion_mass_amu=trap_d["ion_mass_amu"],
        ion_charge=trap_d.get("ion_charge", 1),
        axial_frequency_hz=trap_d["axial_frequency_hz"],
        ion_count=trap_d["ion_count"],
    )

    t = data["targets"]
    targets = DesignTargets(
        magnification=t["magnification"],
        numerical_aperture=t["numerical_aperture"],
        image_distance=t["image_distance_um"] * UM,
        source_mfd=(t["source_mfd_um"][0] * UM, t["source_mfd_um"][1] * UM),
        wavelength=t["wavelength_um"] * UM,
        max_stack_height=t["max_stack_height_um"] * UM,
        aperture_budget=t["aperture_budget_um"] * UM,
    )

    m = data["mirror"]
    mirror = TirMirrorSpec(
        facet_angle_deg=m["facet_angle_deg"],
        n_effective=m["n_effective"],
        n_ambient=m.get("n_ambient", 1.0),
        n_exit=m.get("n_exit", 1.0),
    )

    array_d = data.get("array", {})
    if "mode_mfd_um" in array_d:
        mode_mfd = (array_d["mode_mfd_um"][0] * UM, array_d["mode_mfd_um"][1] * UM)
    else:
        mode_mfd = targets.source_mfd
    decay = array_d.get("leakage_decay_per_um", 1.0) / UM
    ref = array_d.get("leakage_reference", {"pitch_um": 5.0, "db": -30.0})
    leakage_reference = (ref["pitch_um"] * UM, ref["db"])

    g = data["grid"]
    grid = (int(g["nx"]), int(g["ny"]), g["pitch_um"] * UM)

    z_search = None
    if "z_search_um" in data:
        zs = data["z_search_um"]
        z_search = (zs["lo"] * UM, zs["hi"] * UM, int(zs["steps"]))

    sweeps = []
    for row in data.get("sweeps", ()):
        entry = dict(row)
        if entry["parameter"] in ("lateral_offset", "z_offset"):
            entry["lo"] = entry["lo"] * UM
            entry["hi"] = entry["hi"] * UM
        sweeps.append(entry)

    return Scenario(
        name=data.get("name", name_hint),
        comment=data.get("comment", ""),
        trap=trap,
        targets=targets,
        mirror=mirror,
        mode_mfd_m=mode_mfd,
        leakage_decay_per_m=decay,
        leakage_reference=leakage_reference,
        grid=grid,
        z_search=z_search,
        sweeps=tuple(sweeps),
        raw=data,
    )


def load_scenario(path) -> Scenario:
    """Read and validate a scenario file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError as exc:
        raise ScenarioError(f"scenario file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioError(
            f"scenario is not valid JSON: {path}: line {exc.lineno} "
            f"column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(data, dict):
        raise ScenarioError(f"scenario must be a JSON object: {path}")
    name_hint = os.path.splitext(os.path.basename(str(path)))[0]
    return parse_scenario(data, name_hint=name_hint)
