"""End-to-end design of a multi-channel ion-addressing optic.

The pipeline: plan waveguide positions from the ion crystal and the
imaging magnification, synthesize a printed lens stack (tilt-correcting
wedge plus two ideal thin lenses) that realizes the requested
magnification and image distance, then verify the design with scalar
wave propagation: per-channel focus metrics, a full channel-to-ion
crosstalk matrix combining optical spillover with waveguide-leakage
background, and tolerance sweeps over assembly errors.

Conventions. The chip surface is z = 0 and the optical axis is +z.
Waveguide channels are offset along x; the out-coupled beams tilt in
the y-z plane, and the wedge (first stack element) removes that tilt.
Channel i of the physical array images onto ion N-1-i because a
two-lens relay inverts. Lengths are metres and angles degrees at this
module's boundary; wave-optics element tilts are radians internally.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from .crystal import IonCrystal
from .errors import (
    ConvergenceError,
    InfeasibleDesignError,
    InvalidInputError,
)
from .gaussbeam import (
    AstigmaticGaussian,
    BeamAxis,
    FreeSpace,
    ThinLens,
    beam_from_mfd,
    chain_matrix,
)
from .picmodel import (
    TirMirrorSpec,
    WaveguideArraySpec,
    leakage_crosstalk,
    outcoupling_angle,
)
from .wavefield import (
    CircAperture,
    FocusResult,
    ScalarField,
    ThinLensPhase,
    WedgePhase,
    angular_spectrum_propagate,
    apply_element,
    find_focus,
    make_gaussian_field,
    spot_metrics,
)

# Stack geometry bounds (metres). The wedge prints directly on the chip;
# the first lens needs clearance above it, and surfaces below ~25 um
# focal length are not printable with useful sag.
WEDGE_Z = 2.0e-6
MIN_WORKING_DISTANCE = 40.0e-6
MIN_LENS_SPACING = 20.0e-6
MIN_FOCAL_LENGTH = 25.0e-6

# Coarse search grid for the (f2, lens gap) plane.
GRID_STEP = 2.5e-6
F2_RANGE = (30.0e-6, 400.0e-6)
GAP_RANGE = (20.0e-6, 360.0e-6)

# Keep the stack telecentric: the chief ray of an off-axis channel may
# walk off the second lens centre by at most this fraction of the array
# half-span, which keeps per-channel aberrations channel-independent.
TELECENTRIC_TOL = 0.0185
MAX_CHIEF_SLOPE = 0.50

# Aperture sizing: 1.8 beam radii plus the chief-ray reach plus margin,
# clamped to half the aperture budget.
APERTURE_ENVELOPE = 1.8
APERTURE_MARGIN = 5.0e-6

MAGNIFICATION_TOL = 0.01
IMAGE_DISTANCE_TOL = 0.02
NA_TOL = 0.05
WAVE_VERIFY_TOL = 0.03

DEFAULT_GRID = (2048, 2048, 0.15e-6)
CROSSTALK_FLOOR_DB = -200.0
OFF_NORMAL_SLOPE = 0.02

SWEEP_PARAMETERS = (
    "prism_design_angle",
    "source_tilt",
    "lateral_offset",
    "z_offset",
    "chip_wedge",
)

# The shipped failure-analysis preset: the wedge was designed for a 7
# degree exit tilt while the mirror actually out-couples much steeper.
SWEEP_PRESETS = {
    "prism-mismatch": ({"parameter": "prism_design_angle", "lo": 7.0, "hi": 7.0, "steps": 1},),
}


@dataclass(frozen=True)
class DesignTargets:
    """What the addressing optic must achieve.

    magnification is the absolute waveguide-to-ion scale factor (the
    realized system inverts, so the signed value is negative).
    numerical_aperture is the Gaussian divergence NA of the source mode
    along x and must be consistent with source_mfd. image_distance runs
    from the top of the lens stack to the ion plane.
    """

    magnification: float
    numerical_aperture: float
    image_distance: float
    source_mfd: tuple[float, float]
    wavelength: float
    max_stack_height: float
    aperture_budget: float

    def __post_init__(self):
        if not self.magnification > 0:
            raise InvalidInputError("magnification must be positive")
        if not 0 < self.numerical_aperture < 1:
            raise InvalidInputError("numerical_aperture must lie in (0, 1)")
        if not self.image_distance > 0:
            raise InvalidInputError("image_distance must be positive")
        if not (self.source_mfd[0] > 0 and self.source_mfd[1] > 0):
            raise InvalidInputError("source_mfd must be positive")
        if not self.wavelength > 0:
            raise InvalidInputError("wavelength must be positive")
        if not self.max_stack_height > 0:
            raise InvalidInputError("max_stack_height must be positive")
        if not self.aperture_budget > 0:
            raise InvalidInputError("aperture_budget must be positive")


@dataclass(frozen=True)
class LensStackPrescription:
    """A printable stack: wedge plus one or two thin lenses with apertures.

    elements is the ordered (z, element) list consumed by the wave
    propagator. focal_lengths, lens_positions and aperture_radii list
    the powered surfaces bottom to top (one entry in the degenerate
    single-lens mode). predicted_* values come from the ABCD composition
    of the final geometry.
    """

    elements: tuple
    focal_lengths: tuple
    lens_positions: tuple
    aperture_radii: tuple
    stack_height: float
    source_tilt_deg: float
    predicted_magnification: tuple[float, float]
    predicted_image_distance: float
    predicted_na: float
    targets: DesignTargets

    def __post_init__(self):
        zs = [z for z, _ in self.elements]
        if any(b < a for a, b in zip(zs, zs[1:])):
            raise InvalidInputError("element positions must be non-decreasing")

    def element_table(self):
        """Plain-data description of the element list, for reports."""
        rows = []
        for z, el in self.elements:
            if isinstance(el, WedgePhase):
                rows.append(
                    {
                        "z_m": z,
                        "kind": "wedge",
                        "tilt_x_deg": math.degrees(el.tilt_x),
                        "tilt_y_deg": math.degrees(el.tilt_y),
                    }
                )
            elif isinstance(el, ThinLensPhase):
                rows.append({"z_m": z, "kind": "lens", "focal_length_m": el.focal_length})
            elif isinstance(el, CircAperture):
                rows.append({"z_m": z, "kind": "aperture", "radius_m": el.radius})
            else:
                rows.append({"z_m": z, "kind": type(el).__name__})
        return rows


@dataclass(frozen=True)
class ChannelFocus:
    """Focus metrics of one addressing channel.

    z_focus is measured from the chip plane; image_distance from the
    stack top. When at_shared_plane is set the metrics were taken at the
    common crosstalk evaluation plane instead of this channel's own
    x-width minimum.
    """

    channel: int
    waveguide_position: float
    z_focus: float
    image_distance: float
    mfd_fit: tuple[float, float]
    mfd_moment: tuple[float, float]
    centroid: tuple[float, float]
    clipped_fraction: float
    peak_intensity: float
    fit_failed: bool
    beam_slope: float
    off_normal: bool
    at_shared_plane: bool = False


@dataclass(frozen=True)
class CrosstalkReport:
    """Channel-to-ion crosstalk, indexed by addressed ion.

    matrix_db[i][j] is the relative intensity (dB) that the beam
    addressing ion i delivers at ion j's position; the diagonal is 0 by
    definition. contributions lists the optical and waveguide-leakage
    terms and their power sum for every ordered pair.
    """

    matrix_db: np.ndarray
    contributions: tuple
    ion_positions: np.ndarray
    channel_focus: tuple
    evaluation_z: float
    alignment_scale: float
    alignment_residual: float


@dataclass(frozen=True)
class SweepPoint:
    """One perturbation grid point of a tolerance sweep."""

    parameter: str
    value: float
    z_focus: float
    image_distance: float
    mfd_fit: tuple[float, float]
    centroid: tuple[float, float]
    clipped_fraction: float
    beam_slope: float
    off_normal: bool
    dz_focus: float
    dmfd: tuple[float, float]
    dcentroid: tuple[float, float]
    residual_tilt_deg: float


@dataclass(frozen=True)
class SweepReport:
    """Tolerance sweep of the worst-case (outermost) channel."""

    channel: int
    baseline: ChannelFocus
    points: tuple


def pitch_plan(crystal: IonCrystal, magnification: float) -> np.ndarray:
    """Waveguide positions that image onto the crystal's ion positions.

    position_i = ion_position_i / magnification, so the plan scales
    inversely with magnification and returns ion gaps / magnification.
    """
    if not magnification > 0:
        raise InvalidInputError("magnification must be positive")
    return np.asarray(crystal.positions_m, dtype=float) / magnification


def _gaussian_width(w0: float, z_r: float, z: float) -> float:
    return w0 * math.sqrt(1.0 + (z / z_r) ** 2)


def _width_after_lens(w0: float, z_r: float, d1: float, f1: float, g: float,
                      wavelength: float) -> float:
    """1/e^2 radius at the second lens, waist at z=0, lens f1 at z=d1."""
    q = complex(d1, z_r)
    q = 1.0 / (1.0 / q - 1.0 / f1) + g
    return math.sqrt(wavelength / math.pi * abs(q) ** 2 / q.imag)


def _achieved_imaging(f_list, z_list, n_index=1.0):
    """(image distance past the stack top, signed magnification) via ABCD."""
    chain = []
    z_prev = 0.0
    for f, z in zip(f_list, z_list):
        chain.append(FreeSpace(z - z_prev))
        chain.append(ThinLens(f))
        z_prev = z
    mat, _, _ = chain_matrix(chain)
    if abs(mat[1, 1]) < 1e-300:
        raise InfeasibleDesignError("image plane at infinity: S11 = 0")
    v = -mat[0, 1] / mat[1, 1]
    magnification = mat[0, 0] + v * mat[1, 0]
    return float(v), float(magnification)


def _residual_objective(ms: float, image_distance: float):
    """Squared magnification residual at fixed image distance.

    Given (f1, f2, g) the first-lens spacing d1 is eliminated through
    the imaging condition, so the only residual is the magnification.
    Geometry outside the printable bounds is penalised quadratically.
    """

    def objective(params):
        f1, f2, g = params
        if f1 <= 0 or f2 <= 0 or g <= 0:
            return 1e6
        p00 = 1.0 - image_distance / f2
        p01 = g * p00 + image_distance
        m_ach = p00 - p01 / f1
        if abs(m_ach) < 1e-12:
            return 1e6
        d1 = -p01 / m_ach
        penalty = 0.0
        if d1 < MIN_WORKING_DISTANCE:
            penalty += ((MIN_WORKING_DISTANCE - d1) / GRID_STEP) ** 2
        return ((m_ach - ms) / ms) ** 2 + penalty

    return objective


def _wave_verify(f_list, z_list, targets: DesignTargets, magnification: float):
    """Cross-check the ABCD prescription against scalar wave propagation.

    A paraxial probe Gaussian is imaged through the powered surfaces
    (no apertures) and the waist measured at the wave focus must match
    the ABCD magnification within 3 percent. The focus is located by a
    fine fitted-width scan around the predicted image plane, which also
    tolerates the small non-paraxial focal shift.
    """
    w0p = 2.5e-6
    wavelength = targets.wavelength
    z_rp = math.pi * w0p**2 / wavelength
    m_abs = abs(magnification)

    widths = [w0p]
    q = complex(0.0, z_rp)
    z_prev = 0.0
    for f, z in zip(f_list, z_list):
        q += z - z_prev
        widths.append(math.sqrt(wavelength / math.pi * abs(q) ** 2 / q.imag))
        q = 1.0 / (1.0 / q - 1.0 / f)
        z_prev = z

    pitch = min(w0p, m_abs * w0p) / 4.5
    window = max(8.5 * w0p, 5.0 * max(widths))
    nx = 256
    while nx * pitch < window and nx < 2048:
        nx *= 2

    beam = AstigmaticGaussian(wavelength, BeamAxis(w0p), BeamAxis(w0p))
    field = make_gaussian_field(beam, tilt=(0.0, 0.0), grid=(nx, nx, pitch))
    z_now = 0.0
    for f, z in zip(f_list, z_list):
        field = angular_spectrum_propagate(field, z - z_now)
        field = apply_element(field, ThinLensPhase(f))
        z_now = z

    v, _ = _achieved_imaging(f_list, z_list)
    z_top = z_list[-1]
    best = math.inf
    best_edge = None
    offsets = np.linspace(-0.12 * v, 0.12 * v, 13)
    for idx, dz in enumerate(offsets):
        plane = angular_spectrum_propagate(field, z_top + v + dz - z_now)
        mfd = spot_metrics(plane).mfd_fit[0]
        if mfd < best:
            best = mfd
            best_edge = idx in (0, len(offsets) - 1)
    if best_edge:
        raise ConvergenceError(
            "wave cross-check found no waist near the predicted image plane"
        )
    ratio = best / (2.0 * w0p)
    if not math.isfinite(ratio) or abs(ratio / m_abs - 1.0) > WAVE_VERIFY_TOL:
        raise ConvergenceError(
            "wave cross-check disagrees with the ABCD prescription: "
            f"waist ratio {ratio:.4f} vs magnification {m_abs:.4f}",
            residual=abs(ratio / m_abs - 1.0),
        )


def synthesize_lens_stack(
    targets: DesignTargets,
    source_tilt: float = 0.0,
    chief_reach: float = 0.0,
    wave_verify: bool = True,
) -> LensStackPrescription:
    """Find a printable wedge + two-lens stack meeting the targets.

    The search is a deterministic coarse grid over (second focal length,
    lens gap); the first focal length and its height follow in closed
    form from the imaging conditions, so every grid point is exact and
    feasibility alone decides. Ties break toward the smallest stack. A
    bounded simplex polish then minimizes the squared magnification
    residual inside the winning grid cell, and the result is
    cross-checked with a paraxial wave propagation before return.

    When no telecentric two-lens geometry fits the stack budget the
    degenerate single-lens conjugate (flat first surface) is used
    instead; it satisfies the same imaging equations analytically.

    source_tilt (degrees) sizes the corrective wedge; chief_reach
    (metres) is the outermost waveguide offset the apertures must admit.
    """
    if chief_reach < 0:
        raise InvalidInputError("chief_reach must be >= 0")

    wavelength = targets.wavelength
    w0x = targets.source_mfd[0] / 2.0
    w0y = targets.source_mfd[1] / 2.0
    na_pred = wavelength / (math.pi * w0x)
    if abs(na_pred / targets.numerical_aperture - 1.0) > NA_TOL:
        raise InfeasibleDesignError(
            "numerical_aperture inconsistent with source_mfd: the mode "
            f"diverges at NA {na_pred:.4f} but targets ask {targets.numerical_aperture:.4f}"
        )

    ms = -targets.magnification
    dist = targets.image_distance
    budget_r = targets.aperture_budget / 2.0
    z_rx = math.pi * w0x**2 / wavelength
    z_ry = math.pi * w0y**2 / wavelength

    f2_values = np.arange(F2_RANGE[0], F2_RANGE[1] + GRID_STEP / 2, GRID_STEP)
    gap_values = np.arange(GAP_RANGE[0], GAP_RANGE[1] + GRID_STEP / 2, GRID_STEP)

    rejections = {
        "focal_length": 0,
        "working_distance": 0,
        "max_stack_height": 0,
        "telecentricity": 0,
        "internal_focus": 0,
        "chief_slope": 0,
        "aperture_budget": 0,
    }
    best = None
    for f2 in f2_values:
        p00 = 1.0 - dist / f2
        for g in gap_values:
            p01 = g * p00 + dist
            denom = p00 - ms
            if abs(denom) < 1e-9:
                continue
            f1 = p01 / denom
            if f1 < MIN_FOCAL_LENGTH:
                rejections["focal_length"] += 1
                continue
            d1 = -p01 / ms
            if d1 < MIN_WORKING_DISTANCE:
                rejections["working_distance"] += 1
                continue
            stack = d1 + g
            if stack > targets.max_stack_height:
                rejections["max_stack_height"] += 1
                continue
            if abs(1.0 - g / f1) > TELECENTRIC_TOL:
                rejections["telecentricity"] += 1
                continue
            if d1 > f1 and f1 * d1 / (d1 - f1) < g:
                rejections["internal_focus"] += 1
                continue
            if chief_reach / f1 > MAX_CHIEF_SLOPE:
                rejections["chief_slope"] += 1
                continue
            w_l1 = max(
                _gaussian_width(w0x, z_rx, d1), _gaussian_width(w0y, z_ry, d1)
            )
            w_l2 = max(
                _width_after_lens(w0x, z_rx, d1, f1, g, wavelength),
                _width_after_lens(w0y, z_ry, d1, f1, g, wavelength),
            )
            if w_l1 > budget_r or w_l2 > budget_r:
                rejections["aperture_budget"] += 1
                continue
            key = (stack, f2, g)
            if best is None or key < best[0]:
                best = (key, float(f1), float(f2), float(g), float(d1))

    if best is not None:
        _, f1, f2, g, d1 = best
        objective = _residual_objective(ms, dist)
        half = GRID_STEP / 2.0
        polish = minimize(
            objective,
            x0=np.array([f1, f2, g]),
            method="Nelder-Mead",
            bounds=[(f1 - half, f1 + half), (f2 - half, f2 + half), (g - half, g + half)],
            options={"xatol": 1e-12, "fatol": 1e-24, "maxiter": 400},
        )
        if polish.fun < objective((f1, f2, g)):
            f1, f2, g = (float(v) for v in polish.x)
            p00 = 1.0 - dist / f2
            p01 = g * p00 + dist
            d1 = float(-p01 / (p00 - p01 / f1))
        f_list = (f1, f2)
        z_list = (d1, d1 + g)
        w_l1 = max(_gaussian_width(w0x, z_rx, d1), _gaussian_width(w0y, z_ry, d1))
        w_l2 = max(
            _width_after_lens(w0x, z_rx, d1, f1, g, wavelength),
            _width_after_lens(w0y, z_ry, d1, f1, g, wavelength),
        )
        chief_l2 = chief_reach * abs(1.0 - g / f1)
        radii = (
            min(APERTURE_ENVELOPE * w_l1 + chief_reach + APERTURE_MARGIN, budget_r),
            min(APERTURE_ENVELOPE * w_l2 + chief_l2 + APERTURE_MARGIN, budget_r),
        )
    else:
        # Degenerate fallback: one lens imaging source to ion directly.
        height = dist / targets.magnification
        f_single = dist / (1.0 + targets.magnification)
        w_lens = max(
            _gaussian_width(w0x, z_rx, height), _gaussian_width(w0y, z_ry, height)
        )
        failures = [k for k, v in sorted(rejections.items(), key=lambda kv: -kv[1]) if v]
        detail = ", ".join(f"{k} ({rejections[k]} candidates)" for k in failures)
        if height > targets.max_stack_height:
            raise InfeasibleDesignError(
                "no feasible lens stack: the single-lens conjugate needs "
                f"{height * 1e6:.1f} um of stack height "
                f"(max_stack_height {targets.max_stack_height * 1e6:.1f} um); "
                f"two-lens candidates rejected by: {detail}"
            )
        if height < MIN_WORKING_DISTANCE + MIN_LENS_SPACING:
            raise InfeasibleDesignError(
                "no feasible lens stack: working_distance too short for the "
                f"single-lens conjugate; two-lens candidates rejected by: {detail}"
            )
        if w_lens > budget_r:
            raise InfeasibleDesignError(
                "no feasible lens stack: aperture_budget admits a beam radius "
                f"of {budget_r * 1e6:.1f} um but the mode grows to "
                f"{w_lens * 1e6:.1f} um; two-lens candidates rejected by: {detail}"
            )
        f_list = (f_single,)
        z_list = (height,)
        radii = (
            min(APERTURE_ENVELOPE * w_lens + chief_reach + APERTURE_MARGIN, budget_r),
        )

    v_ach, m_ach = _achieved_imaging(f_list, z_list)
    if abs(abs(m_ach) / targets.magnification - 1.0) > MAGNIFICATION_TOL:
        raise InfeasibleDesignError(
            f"magnification misses target: {abs(m_ach):.4f} vs {targets.magnification:.4f}"
        )
    if abs(v_ach / dist - 1.0) > IMAGE_DISTANCE_TOL:
        raise InfeasibleDesignError(
            f"image_distance misses target: {v_ach * 1e6:.2f} um vs {dist * 1e6:.2f} um"
        )

    if wave_verify:
        _wave_verify(f_list, z_list, targets, m_ach)

    elements = []
    if abs(source_tilt) > 0:
        elements.append((WEDGE_Z, WedgePhase(0.0, -math.radians(source_tilt))))
    for f, z, r in zip(f_list, z_list, radii):
        elements.append((z, CircAperture(r)))
        elements.append((z, ThinLensPhase(f)))

    return LensStackPrescription(
        elements=tuple(elements),
        focal_lengths=tuple(f_list),
        lens_positions=tuple(z_list),
        aperture_radii=tuple(radii),
        stack_height=float(z_list[-1]),
        source_tilt_deg=float(source_tilt),
        predicted_magnification=(m_ach, m_ach),
        predicted_image_distance=v_ach,
        predicted_na=wavelength / (math.pi * abs(m_ach) * w0x),
        targets=targets,
    )


def _default_z_search(prescription: LensStackPrescription):
    top = prescription.stack_height
    dist = prescription.predicted_image_distance
    return (top + 0.5 * dist, top + 1.25 * dist, 33)


def _beam_slope(result: FocusResult) -> float:
    """Transverse walk rate dy/dz of the focused beam, radians."""
    profile = result.axial_profile
    z = profile["refine_z"]
    cy = profile["refine_centroid_y"]
    if len(z) < 2 or z[-1] == z[0]:
        return 0.0
    return float(np.polyfit(z, cy, 1)[0])


def _run_channel(
    elements,
    beam: AstigmaticGaussian,
    center_x: float,
    tilt_rad: float,
    grid,
    z_search,
    stack_top: float,
) -> tuple[ChannelFocus, FocusResult]:
    source = make_gaussian_field(
        beam, tilt=(0.0, tilt_rad), grid=grid, center=(center_x, 0.0)
    )
    result = find_focus(source, list(elements), z_search)
    m = result.metrics
    slope = _beam_slope(result)
    focus = ChannelFocus(
        channel=-1,
        waveguide_position=center_x,
        z_focus=result.z_focus,
        image_distance=result.z_focus - stack_top,
        mfd_fit=m.mfd_fit,
        mfd_moment=m.mfd_moment,
        centroid=m.centroid,
        clipped_fraction=m.clipped_fraction,
        peak_intensity=m.peak_intensity,
        fit_failed=m.fit_failed,
        beam_slope=slope,
        off_normal=abs(slope) > OFF_NORMAL_SLOPE,
    )
    return focus, result


def simulate_channel(
    prescription: LensStackPrescription,
    array: WaveguideArraySpec,
    channel: int,
    mirror: TirMirrorSpec,
    grid=None,
    z_search=None,
) -> ChannelFocus:
    """Wave-propagate one channel through the stack and find its focus.

    The source is the array's Gaussian mode at the channel's transverse
    offset, tilted by the mirror's out-coupling exit angle; the returned
    metrics are taken at the x-width minimum past the stack.
    """
    if not 0 <= channel < array.channel_count:
        raise InvalidInputError(
            f"channel {channel} out of range for {array.channel_count} waveguides"
        )
    grid = DEFAULT_GRID if grid is None else grid
    if z_search is None:
        z_search = _default_z_search(prescription)
    tilt = math.radians(outcoupling_angle(mirror).exit_angle_deg)
    beam = beam_from_mfd(
        array.mode_mfd_m[0], array.mode_mfd_m[1], prescription.targets.wavelength
    )
    focus, _ = _run_channel(
        prescription.elements,
        beam,
        float(array.positions_m[channel]),
        tilt,
        grid,
        z_search,
        prescription.stack_height,
    )
    return replace(focus, channel=channel)


def _plane_intensity_row(field: ScalarField, y_value: float) -> np.ndarray:
    """Intensity along x at height y, linearly interpolated between rows."""
    intensity = np.abs(field.samples) ** 2
    y = field.y
    idx = float(np.interp(y_value, y, np.arange(len(y))))
    lo = int(np.clip(math.floor(idx), 0, len(y) - 2))
    frac = idx - lo
    return (1.0 - frac) * intensity[lo, :] + frac * intensity[lo + 1, :]


def _propagate_to_plane(source: ScalarField, elements, z_plane: float) -> ScalarField:
    field = source
    z_now = 0.0
    for z_el, el in elements:
        field = angular_spectrum_propagate(field, z_el - z_now)
        field = apply_element(field, el)
        z_now = z_el
    return angular_spectrum_propagate(field, z_plane - z_now)


def crosstalk_matrix(
    prescription: LensStackPrescription,
    array: WaveguideArraySpec,
    crystal: IonCrystal,
    mirror: TirMirrorSpec,
    grid=None,
    channel_focus: Optional[Sequence[ChannelFocus]] = None,
) -> CrosstalkReport:
    """Intensity crosstalk of every addressing beam at every ion.

    All channels are evaluated in one common plane, the x-focus of the
    centre channel (the ions sit in one plane above the chip). Ion
    positions are mapped into that plane by a least-squares scale fit of
    the simulated spot centroids, which absorbs the sub-percent
    magnification offset of the realized stack; the fit residual is
    reported. The optical term for the pair (i, j) is the beam-i
    intensity at ion j relative to ion i on the row through the centre
    spot; the leakage term comes from the waveguide-array model with the
    two channels that address ions i and j; totals are power sums.

    Passing precomputed channel_focus records (from simulate_channel)
    reuses their centre-channel focus; otherwise only the centre channel
    gets a focus search and the other entries hold shared-plane metrics.
    """
    n = array.channel_count
    if len(crystal.positions_m) != n:
        raise InvalidInputError(
            f"crystal has {len(crystal.positions_m)} ions but the array "
            f"has {n} channels"
        )
    grid = DEFAULT_GRID if grid is None else grid
    ions = np.asarray(crystal.positions_m, dtype=float)

    tilt = math.radians(outcoupling_angle(mirror).exit_angle_deg)
    beam = beam_from_mfd(
        array.mode_mfd_m[0], array.mode_mfd_m[1], prescription.targets.wavelength
    )
    centre = int(np.argmin(np.abs(array.positions_m)))

    if channel_focus is not None:
        if len(channel_focus) != n:
            raise InvalidInputError("channel_focus must list every channel")
        focus_table = [replace(cf, channel=i) for i, cf in enumerate(channel_focus)]
        z_eval = focus_table[centre].z_focus
        y_row = focus_table[centre].centroid[1]
    else:
        try:
            centre_focus, _ = _run_channel(
                prescription.elements,
                beam,
                float(array.positions_m[centre]),
                tilt,
                grid,
                _default_z_search(prescription),
                prescription.stack_height,
            )
        except Exception as exc:
            raise type(exc)(f"channel {centre}: {exc}") from exc
        centre_focus = replace(centre_focus, channel=centre)
        z_eval = centre_focus.z_focus
        y_row = centre_focus.centroid[1]
        focus_table = [None] * n

    if n == 1:
        if channel_focus is None:
            focus_table[0] = centre_focus
        return CrosstalkReport(
            matrix_db=np.zeros((1, 1)),
            contributions=(),
            ion_positions=ions,
            channel_focus=tuple(focus_table),
            evaluation_z=z_eval,
            alignment_scale=float(prescription.predicted_magnification[0]),
            alignment_residual=0.0,
        )

    rows = np.empty((n, int(grid[0])))
    centroids = np.empty(n)
    for i in range(n):
        try:
            source = make_gaussian_field(
                beam,
                tilt=(0.0, tilt),
                grid=grid,
                center=(float(array.positions_m[i]), 0.0),
            )
            field = _propagate_to_plane(source, prescription.elements, z_eval)
        except Exception as exc:
            raise type(exc)(f"channel {i}: {exc}") from exc
        metrics = spot_metrics(field)
        rows[i] = _plane_intensity_row(field, y_row)
        centroids[i] = metrics.centroid[0]
        if channel_focus is None and focus_table[i] is None:
            focus_table[i] = ChannelFocus(
                channel=i,
                waveguide_position=float(array.positions_m[i]),
                z_focus=z_eval,
                image_distance=z_eval - prescription.stack_height,
                mfd_fit=metrics.mfd_fit,
                mfd_moment=metrics.mfd_moment,
                centroid=metrics.centroid,
                clipped_fraction=metrics.clipped_fraction,
                peak_intensity=metrics.peak_intensity,
                fit_failed=metrics.fit_failed,
                beam_slope=0.0,
                off_normal=False,
                at_shared_plane=True,
            )
    if channel_focus is None:
        focus_table[centre] = centre_focus

    # Channel k images onto ion n-1-k, so the spot of channel n-1-j
    # marks ion j. One scale factor maps ion coordinates to the plane.
    spot_for_ion = centroids[::-1]
    scale = float(np.dot(spot_for_ion, ions) / np.dot(ions, ions))
    residual = float(np.max(np.abs(spot_for_ion - scale * ions)))
    ion_x = scale * ions

    nx, _, pitch = int(grid[0]), int(grid[1]), float(grid[2])
    x_coords = (np.arange(nx) - nx // 2) * pitch

    matrix = np.zeros((n, n))
    contributions = []
    for a in range(n):
        row = rows[n - 1 - a]
        denom = float(np.interp(ion_x[a], x_coords, row))
        for b in range(n):
            if a == b:
                continue
            num = float(np.interp(ion_x[b], x_coords, row))
            if denom <= 0:
                raise ConvergenceError(
                    f"channel {n - 1 - a}: no power at its target ion"
                )
            optical = 10.0 * math.log10(max(num / denom, 1e-20))
            optical = max(optical, CROSSTALK_FLOOR_DB)
            leak = leakage_crosstalk(array, n - 1 - a, n - 1 - b)
            leak = max(leak, CROSSTALK_FLOOR_DB)
            total = 10.0 * math.log10(10.0 ** (optical / 10.0) + 10.0 ** (leak / 10.0))
            matrix[a, b] = total
            contributions.append(
                {
                    "ion_i": a,
                    "ion_j": b,
                    "optical_db": optical,
                    "leakage_db": leak,
                    "total_db": total,
                }
            )

    return CrosstalkReport(
        matrix_db=matrix,
        contributions=tuple(contributions),
        ion_positions=ions,
        channel_focus=tuple(focus_table),
        evaluation_z=z_eval,
        alignment_scale=scale,
        alignment_residual=residual,
    )


def _perturbed_system(prescription, array, channel, mirror, parameter, value):
    """Element list, source centre and tilt for one perturbation point."""
    exit_deg = outcoupling_angle(mirror).exit_angle_deg
    elements = list(prescription.elements)
    center = float(array.positions_m[channel])
    tilt_deg = exit_deg
    residual = 0.0

    if parameter == "prism_design_angle":
        rebuilt = [
            (z, el) for z, el in elements if not isinstance(el, WedgePhase)
        ]
        rebuilt.insert(0, (WEDGE_Z, WedgePhase(0.0, -math.radians(value))))
        elements = rebuilt
        residual = exit_deg - value
    elif parameter == "source_tilt":
        tilt_deg = exit_deg + value
        residual = value
    elif parameter == "lateral_offset":
        center += value
    elif parameter == "z_offset":
        elements = [(z + value, el) for z, el in elements]
        if elements and elements[0][0] <= 0:
            raise InvalidInputError(
                f"z_offset {value:.3e} m pushes the stack below the chip plane"
            )
    elif parameter == "chip_wedge":
        elements = [(WEDGE_Z / 2.0, WedgePhase(0.0, math.radians(value)))] + elements
    else:
        raise InvalidInputError(
            f"unknown sweep parameter {parameter!r}; expected one of "
            + ", ".join(SWEEP_PARAMETERS)
        )
    return elements, center, math.radians(tilt_deg), residual


def tolerance_sweep(
    prescription: LensStackPrescription,
    array: WaveguideArraySpec,
    mirror: TirMirrorSpec,
    perturbations: Sequence[dict],
    grid=None,
    z_search=None,
    preset: Optional[str] = None,
) -> SweepReport:
    """Re-simulate the worst-case channel over assembly-error grids.

    Each perturbation is {parameter, lo, hi, steps}. Angles are degrees,
    offsets metres. prism_design_angle is the absolute exit angle the
    corrective wedge was built for (nominal: the mirror's actual exit
    angle); the remaining parameters are deltas with nominal 0. The
    worst-case channel is the one with the largest transverse offset,
    ties resolved toward the lower index.
    """
    if preset is not None:
        if preset not in SWEEP_PRESETS:
            raise InvalidInputError(
                f"unknown preset {preset!r}; available: "
                + ", ".join(sorted(SWEEP_PRESETS))
            )
        perturbations = list(perturbations) + list(SWEEP_PRESETS[preset])
    if not perturbations:
        raise InvalidInputError("tolerance_sweep needs perturbations or a preset")

    grid = DEFAULT_GRID if grid is None else grid
    if z_search is None:
        z_search = _default_z_search(prescription)
    worst = int(np.argmax(np.abs(array.positions_m)))
    beam = beam_from_mfd(
        array.mode_mfd_m[0], array.mode_mfd_m[1], prescription.targets.wavelength
    )
    exit_deg = outcoupling_angle(mirror).exit_angle_deg

    baseline, _ = _run_channel(
        prescription.elements,
        beam,
        float(array.positions_m[worst]),
        math.radians(exit_deg),
        grid,
        z_search,
        prescription.stack_height,
    )
    baseline = replace(baseline, channel=worst)

    points = []
    for spec_row in perturbations:
        parameter = spec_row["parameter"]
        if parameter not in SWEEP_PARAMETERS:
            raise InvalidInputError(
                f"unknown sweep parameter {parameter!r}; expected one of "
                + ", ".join(SWEEP_PARAMETERS)
            )
        lo, hi, steps = spec_row["lo"], spec_row["hi"], int(spec_row["steps"])
        if steps < 1:
            raise InvalidInputError("sweep steps must be >= 1")
        if steps == 1:
            values = [0.5 * (lo + hi)]
        else:
            values = list(np.linspace(lo, hi, steps))
        for value in values:
            try:
                elements, center, tilt_rad, residual = _perturbed_system(
                    prescription, array, worst, mirror, parameter, value
                )
                focus, _ = _run_channel(
                    elements,
                    beam,
                    center,
                    tilt_rad,
                    grid,
                    z_search,
                    prescription.stack_height,
                )
            except Exception as exc:
                raise type(exc)(
                    f"sweep point {parameter}={value:g} failed: {exc}"
                ) from exc
            points.append(
                SweepPoint(
                    parameter=parameter,
                    value=float(value),
                    z_focus=focus.z_focus,
                    image_distance=focus.image_distance,
                    mfd_fit=focus.mfd_fit,
                    centroid=focus.centroid,
                    clipped_fraction=focus.clipped_fraction,
                    beam_slope=focus.beam_slope,
                    off_normal=focus.off_normal,
                    dz_focus=focus.z_focus - baseline.z_focus,
                    dmfd=(
                        focus.mfd_fit[0] - baseline.mfd_fit[0],
                        focus.mfd_fit[1] - baseline.mfd_fit[1],
                    ),
                    dcentroid=(
                        focus.centroid[0] - baseline.centroid[0],
                        focus.centroid[1] - baseline.centroid[1],
                    ),
                    residual_tilt_deg=residual,
                )
            )

    return SweepReport(channel=worst, baseline=baseline, points=tuple(points))
