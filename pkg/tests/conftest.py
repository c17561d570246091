"""Shared fixtures.

The wave-optics runs on the reference scenario are expensive, so they are
session scoped and reused by both the designer tests and the acceptance
gate. Each heavyweight fixture records its own wall time for the budget
checks.
"""

import time
from pathlib import Path

import numpy as np
import pytest

from ionoptics import (
    WaveguideArraySpec,
    crosstalk_matrix,
    load_scenario,
    outcoupling_angle,
    pitch_plan,
    simulate_channel,
    solve_crystal,
    synthesize_lens_stack,
)

SCENARIO_DIR = Path(__file__).resolve().parents[1] / "scenarios"


def build_pipeline(scenario):
    """Scenario -> crystal, waveguide plan, and lens prescription."""
    crystal = solve_crystal(scenario.trap)
    positions = pitch_plan(crystal, scenario.targets.magnification)
    array = WaveguideArraySpec(
        positions_m=positions,
        mode_mfd_m=scenario.mode_mfd_m,
        leakage_decay_per_m=scenario.leakage_decay_per_m,
        leakage_reference=scenario.leakage_reference,
    )
    outcoupling = outcoupling_angle(scenario.mirror)
    prescription = synthesize_lens_stack(
        scenario.targets,
        source_tilt=outcoupling.exit_angle_deg,
        chief_reach=float(np.max(np.abs(positions))),
    )
    return {
        "scenario": scenario,
        "crystal": crystal,
        "positions": positions,
        "array": array,
        "outcoupling": outcoupling,
        "prescription": prescription,
    }


@pytest.fixture(scope="session")
def reference_scenario():
    return load_scenario(str(SCENARIO_DIR / "reference.json"))


@pytest.fixture(scope="session")
def compact_scenario():
    return load_scenario(str(SCENARIO_DIR / "compact.json"))


@pytest.fixture(scope="session")
def reference_pipeline(reference_scenario):
    return build_pipeline(reference_scenario)


@pytest.fixture(scope="session")
def compact_pipeline(compact_scenario):
    return build_pipeline(compact_scenario)


@pytest.fixture(scope="session")
def reference_center(reference_pipeline):
    """Full-grid focus search for the channel nearest the optical axis."""
    pipe = reference_pipeline
    centre = int(np.argmin(np.abs(pipe["positions"])))
    start = time.perf_counter()
    focus = simulate_channel(
        pipe["prescription"],
        pipe["array"],
        centre,
        pipe["scenario"].mirror,
        grid=pipe["scenario"].grid,
    )
    elapsed = time.perf_counter() - start
    return {"channel": centre, "focus": focus, "elapsed_s": elapsed}


@pytest.fixture(scope="session")
def reference_crosstalk(reference_pipeline):
    """Full crosstalk matrix for the ten-channel reference scenario."""
    pipe = reference_pipeline
    start = time.perf_counter()
    report = crosstalk_matrix(
        pipe["prescription"],
        pipe["array"],
        pipe["crystal"],
        pipe["scenario"].mirror,
        grid=pipe["scenario"].grid,
    )
    elapsed = time.perf_counter() - start
    return {"report": report, "elapsed_s": elapsed}


@pytest.fixture(scope="session")
def compact_channels(compact_pipeline):
    """Per-channel focus results for the three-channel compact scenario."""
    pipe = compact_pipeline
    return [
        simulate_channel(
            pipe["prescription"],
            pipe["array"],
            channel,
            pipe["scenario"].mirror,
            grid=pipe["scenario"].grid,
        )
        for channel in range(pipe["array"].channel_count)
    ]
