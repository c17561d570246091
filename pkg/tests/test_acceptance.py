"""Acceptance gate: one test per shipped guarantee, frozen tolerances.

Each test asserts its criterion at the stated tolerance and prints a
single summary line; `pytest -v` therefore shows one pass/fail line per
criterion.
"""

import json
import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from ionoptics import (
    FreeSpace,
    ThinLens,
    TirMirrorSpec,
    WaveguideArraySpec,
    beam_from_mfd,
    leakage_crosstalk,
    outcoupling_angle,
    propagate_abcd,
    rayleigh_length,
    tir_critical_angle,
    tolerance_sweep,
    width_at,
)
from ionoptics.crystal import equilibrium_positions, force_residual
from ionoptics.wavefield import (
    ThinLensPhase,
    angular_spectrum_propagate,
    find_focus,
    make_gaussian_field,
    spot_metrics,
)

SCENARIO_DIR = Path(__file__).resolve().parents[1] / "scenarios"
WL = 0.729e-6


def test_ac1_equilibrium_positions_analytic():
    start = time.perf_counter()
    two = equilibrium_positions(2)
    three = equilibrium_positions(3)
    expected_two = (1.0 / 4.0) ** (1.0 / 3.0)
    expected_three = (5.0 / 4.0) ** (1.0 / 3.0)
    assert two == pytest.approx([-expected_two, expected_two], abs=1e-10)
    assert three == pytest.approx(
        [-expected_three, 0.0, expected_three], abs=1e-10
    )
    worst = 0.0
    for n in range(2, 51):
        u = equilibrium_positions(n)
        worst = max(worst, float(np.max(np.abs(force_residual(u)))))
    elapsed = time.perf_counter() - start
    assert worst < 1e-10
    assert elapsed < 1.0
    print(
        f"AC1 PASS: N=2,3 match analytic positions to 1e-10; "
        f"worst residual {worst:.2e} for N<=50 in {elapsed:.3f} s"
    )


def test_ac2_waveguide_pitch_window(reference_pipeline):
    start = time.perf_counter()
    positions = reference_pipeline["positions"]
    gaps_um = np.diff(positions) * 1e6
    lo, hi = float(gaps_um.min()), float(gaps_um.max())
    elapsed = time.perf_counter() - start
    assert lo == pytest.approx(4.84, rel=0.10)
    assert hi == pytest.approx(6.62, rel=0.10)
    assert elapsed < 1.0
    print(
        f"AC2 PASS: waveguide gaps span ({lo:.2f}, {hi:.2f}) um, "
        f"endpoints within 10% of (4.84, 6.62) um"
    )


def test_ac3_tir_outcoupling_geometry():
    mirror = TirMirrorSpec(facet_angle_deg=52.0, n_effective=1.466)
    critical = tir_critical_angle(mirror)
    exit_deg = outcoupling_angle(mirror).exit_angle_deg
    assert critical == pytest.approx(43.0, abs=0.2)
    assert 20.0 <= exit_deg <= 21.5
    print(
        f"AC3 PASS: critical angle {critical:.2f} deg (43.0 +/- 0.2); "
        f"52 deg facet exits at {exit_deg:.2f} deg in [20.0, 21.5]"
    )


def test_ac4_rayleigh_range_consistency():
    beam = beam_from_mfd(2.45e-6, 3.42e-6, WL)
    z_r_um = rayleigh_length(beam, "y") * 1e6
    assert z_r_um == pytest.approx(12.6, abs=0.1)
    print(f"AC4 PASS: z_R for MFD 3.42 um at 729 nm is {z_r_um:.2f} um (12.6 +/- 0.1)")


def test_ac5_reference_focus_and_spot(reference_pipeline, reference_center):
    focus = reference_center["focus"]
    elapsed = reference_center["elapsed_s"]
    image_um = focus.image_distance * 1e6

    assert 169.0 <= image_um <= 185.0
    assert 163.0 <= image_um <= 185.0  # measured-comparison band, also reported

    magnification = abs(reference_pipeline["prescription"].predicted_magnification[0])
    source_mfd = reference_pipeline["scenario"].targets.source_mfd
    design_mfd_um = (
        magnification * source_mfd[0] * 1e6,
        magnification * source_mfd[1] * 1e6,
    )
    assert design_mfd_um[0] == pytest.approx(1.3, rel=0.15)
    assert design_mfd_um[1] == pytest.approx(3.5, rel=0.15)

    wave_mfd_um = (focus.mfd_fit[0] * 1e6, focus.mfd_fit[1] * 1e6)
    assert wave_mfd_um[0] == pytest.approx(1.8813, rel=0.02)
    assert wave_mfd_um[1] == pytest.approx(3.1658, rel=0.02)
    assert not focus.fit_failed
    assert elapsed < 120.0
    print(
        f"AC5 PASS: x-focus {image_um:.2f} um in [169, 185] "
        f"(also inside reported band [163, 185]); design MFDs "
        f"({design_mfd_um[0]:.2f}, {design_mfd_um[1]:.2f}) um within 15% of "
        f"(1.3, 3.5); wave-fit MFDs ({wave_mfd_um[0]:.3f}, {wave_mfd_um[1]:.3f}) um; "
        f"{elapsed:.0f} s"
    )


def test_ac6_crosstalk_budget(reference_pipeline, reference_crosstalk):
    anchor = WaveguideArraySpec(
        positions_m=np.array([0.0, 5.0e-6]),
        mode_mfd_m=reference_pipeline["scenario"].mode_mfd_m,
        leakage_decay_per_m=reference_pipeline["scenario"].leakage_decay_per_m,
        leakage_reference=reference_pipeline["scenario"].leakage_reference,
    )
    anchor_db = leakage_crosstalk(anchor, 0, 1)
    assert anchor_db == pytest.approx(-30.0, abs=1.0)

    report = reference_crosstalk["report"]
    elapsed = reference_crosstalk["elapsed_s"]
    nn_total = [
        c["total_db"]
        for c in report.contributions
        if abs(c["ion_i"] - c["ion_j"]) == 1
    ]
    worst_nn = max(nn_total)
    assert worst_nn <= -25.0

    optical_power = sum(
        10.0 ** (c["optical_db"] / 10.0) for c in report.contributions
    )
    leakage_power = sum(
        10.0 ** (c["leakage_db"] / 10.0) for c in report.contributions
    )
    gap_db = abs(10.0 * math.log10(optical_power / leakage_power))
    assert gap_db <= 10.0
    assert elapsed < 600.0
    print(
        f"AC6 PASS: leakage anchor {anchor_db:.2f} dB at 5 um pitch (-30 +/- 1); "
        f"worst nearest-neighbor total {worst_nn:.2f} dB <= -25; optical vs "
        f"leakage aggregate gap {gap_db:.2f} dB <= 10; 10x10 matrix in "
        f"{elapsed:.0f} s"
    )


def test_ac7_propagator_properties():
    start = time.perf_counter()
    beam = beam_from_mfd(5.0e-6, 5.0e-6, WL)
    field = make_gaussian_field(beam, (0.0, 0.0), (512, 512, 0.25e-6))

    def power(f):
        return float(np.sum(np.abs(f.samples) ** 2) * f.pitch**2)

    moved = angular_spectrum_propagate(field, 150e-6)
    power_error = abs(power(moved) - power(field))
    assert power_error < 1e-6

    back = angular_spectrum_propagate(moved, -150e-6)
    roundtrip_error = float(
        np.max(np.abs(back.samples - field.samples))
        / np.max(np.abs(field.samples))
    )
    assert roundtrip_error < 1e-9

    z_r = rayleigh_length(beam, "x")
    worst_width = 0.0
    for z in np.linspace(0.25, 3.0, 20) * z_r:
        metrics = spot_metrics(angular_spectrum_propagate(field, z))
        expected = 2.0 * width_at(beam, "x", z)
        worst_width = max(
            worst_width,
            abs(metrics.mfd_fit[0] / expected - 1.0),
            abs(metrics.mfd_fit[1] / expected - 1.0),
        )
    assert worst_width < 0.01

    # paraxial single-lens image: wave focus vs complex-q prediction
    probe = beam_from_mfd(5.0e-6, 5.0e-6, WL)
    focal, lens_z = 150e-6, 300e-6
    predicted = propagate_abcd(probe, [FreeSpace(lens_z), ThinLens(focal)])
    z_image = lens_z + predicted.x.waist_position
    mfd_image = 2.0 * predicted.x.waist_radius
    wave_field = make_gaussian_field(probe, (0.0, 0.0), (1024, 1024, 0.25e-6))
    result = find_focus(
        wave_field,
        [(lens_z, ThinLensPhase(focal))],
        z_search=(450e-6, 750e-6, 33),
    )
    z_error = abs(result.z_focus / z_image - 1.0)
    mfd_error = abs(result.metrics.mfd_fit[0] / mfd_image - 1.0)
    assert z_error < 0.03
    assert mfd_error < 0.03

    elapsed = time.perf_counter() - start
    assert elapsed < 60.0
    print(
        f"AC7 PASS: power error {power_error:.1e} < 1e-6; roundtrip "
        f"{roundtrip_error:.1e} < 1e-9; w(z) worst {worst_width * 100:.2f}% over 20 "
        f"distances < 1%; ABCD-vs-wave focus {z_error * 100:.2f}% / width "
        f"{mfd_error * 100:.2f}% < 3%; {elapsed:.0f} s"
    )


def test_ac8_tolerance_presets(reference_pipeline):
    pipe = reference_pipeline
    scenario = pipe["scenario"]
    start = time.perf_counter()

    preset = tolerance_sweep(
        pipe["prescription"],
        pipe["array"],
        scenario.mirror,
        (),
        grid=scenario.grid,
        preset="prism-mismatch",
    )
    point = preset.points[0]
    assert point.clipped_fraction > 0.0
    assert point.off_normal

    wedge = tolerance_sweep(
        pipe["prescription"],
        pipe["array"],
        scenario.mirror,
        scenario.sweeps,
        grid=scenario.grid,
    )
    shifts_nm = [
        1e9 * max(abs(p.dcentroid[0]), abs(p.dcentroid[1])) for p in wedge.points
    ]
    assert wedge.points[0].parameter == "chip_wedge"
    assert max(shifts_nm) < 10.0

    elapsed = time.perf_counter() - start
    assert elapsed < 120.0
    print(
        f"AC8 PASS: prism-mismatch preset clips {point.clipped_fraction:.3f} "
        f"of the power and flags off-normal propagation; chip-wedge +/-0.002 deg "
        f"moves the centroid at most {max(shifts_nm):.2f} nm < 10 nm; "
        f"{elapsed:.0f} s"
    )


def _run_cli(tmp_path, tag, *args):
    import os

    outdir = tmp_path / tag
    outdir.mkdir()
    env = dict(os.environ)
    env["IONOPTICS_OUTDIR"] = str(outdir)
    result = subprocess.run(
        [sys.executable, "-m", "ionoptics", *map(str, args)],
        capture_output=True,
        text=True,
        env=env,
    )
    assert result.returncode == 0, result.stderr
    return outdir


def _stable_part(path):
    report = json.loads(path.read_text())
    report.pop("run")
    return json.dumps(report, sort_keys=True)


def test_ac9_reports_are_deterministic(tmp_path):
    compared = []
    for scenario in ("reference", "compact"):
        scenario_path = SCENARIO_DIR / f"{scenario}.json"
        first = _run_cli(tmp_path, f"{scenario}_design_a", "design", scenario_path)
        second = _run_cli(tmp_path, f"{scenario}_design_b", "design", scenario_path)
        name = f"{scenario}_design_report.json"
        assert _stable_part(first / name) == _stable_part(second / name)
        compared.append(f"{scenario} design")

    first = _run_cli(tmp_path, "compact_sweep_a", "sweep", SCENARIO_DIR / "compact.json")
    second = _run_cli(tmp_path, "compact_sweep_b", "sweep", SCENARIO_DIR / "compact.json")
    assert _stable_part(first / "compact_sweep_report.json") == _stable_part(
        second / "compact_sweep_report.json"
    )
    assert (first / "compact_sweep.csv").read_bytes() == (
        second / "compact_sweep.csv"
    ).read_bytes()
    compared.append("compact sweep (report and CSV)")

    for run in ("a", "b"):
        _run_cli(
            tmp_path,
            f"crystal_{run}",
            "crystal",
            SCENARIO_DIR / "reference.json",
            "--report",
            tmp_path / f"crystal_{run}" / "crystal.json",
        )
    assert _stable_part(tmp_path / "crystal_a" / "crystal.json") == _stable_part(
        tmp_path / "crystal_b" / "crystal.json"
    )
    compared.append("reference crystal")

    print(
        "AC9 PASS: byte-identical reports (run block excluded) across two runs: "
        + "; ".join(compared)
    )
