"""Scalar wave optics on a uniform grid: angular-spectrum propagation,
thin phase elements, and focal-spot metrology.

Fields are sampled on an nx-by-ny grid (powers of two, >= 64) with a
single pitch for both axes. samples[iy, ix] holds the complex amplitude
at x = (ix - nx/2) * pitch + origin_x, and likewise for y. Propagation
uses the band-limited angular spectrum: the spectrum is multiplied by
exp(i kz d) with kz = sqrt(k^2 - kx^2 - ky^2) and evanescent components
(kx^2 + ky^2 > k^2) are discarded. Within the propagating band the
transfer function has unit modulus, so power is conserved and a
z / -z round trip is the identity.

Before propagating, the routine estimates where the beam will land from
the first and second moments of intensity in both real and angular
space, including the x-theta covariance (so converging beams are not
penalised), and refuses distances that would push the predicted 1/e^2
footprint into the outer half of the window, where periodic wrap-around
would corrupt the result.

All angles are radians and all lengths metres.
"""

from __future__ import annotations

import math
import struct
import warnings
from dataclasses import dataclass, replace
from typing import Sequence, Union

import numpy as np
import scipy.fft as sfft
from scipy.optimize import OptimizeWarning, curve_fit

from .errors import (
    FocusNotBracketedError,
    InvalidGeometryError,
    InvalidInputError,
    PropagationWindowError,
    SamplingError,
)
from .gaussbeam import AstigmaticGaussian

__all__ = [
    "ScalarField",
    "ThinLensPhase",
    "WedgePhase",
    "RectAperture",
    "CircAperture",
    "PhaseElement",
    "make_gaussian_field",
    "angular_spectrum_propagate",
    "apply_element",
    "spot_metrics",
    "SpotMetrics",
    "find_focus",
    "FocusResult",
    "write_field_sfld",
    "read_field_sfld",
    "write_field_csv",
]

_MIN_GRID = 64
SFLD_MAGIC = b"SFLD"
# magic, version, nx, ny, clipped_fraction, pitch, wavelength,
# ambient_index, origin_x, origin_y
_SFLD_HEADER = struct.Struct("<4sIIIf5d")
SFLD_HEADER_SIZE = 64
# wrap-around guard: |centroid| + this factor times the predicted 1/e^2
# radius must stay inside the half-width of the grid
_WINDOW_FACTOR = 2.0
_TILT_LIMIT = math.radians(30.0)


def _check_grid(nx: int, ny: int, pitch: float):
    for n in (nx, ny):
        if n < _MIN_GRID or (n & (n - 1)) != 0:
            raise InvalidInputError(
                f"grid dimensions must be powers of two >= {_MIN_GRID}, got {nx}x{ny}"
            )
    if not pitch > 0:
        raise InvalidInputError("pitch must be positive")


@dataclass(eq=False)
class ScalarField:
    """Sampled complex field. Treat instances as immutable; operations
    return new fields."""

    samples: np.ndarray
    pitch: float
    wavelength: float
    ambient_index: float = 1.0
    origin: tuple[float, float] = (0.0, 0.0)
    clipped_fraction: float = 0.0

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.complex128)
        if self.samples.ndim != 2:
            raise InvalidInputError("samples must be a 2-d array")
        _check_grid(self.nx, self.ny, self.pitch)
        if not self.wavelength > 0:
            raise InvalidInputError("wavelength must be positive")
        if not self.ambient_index >= 1.0:
            raise InvalidInputError("ambient_index must be >= 1")

    @property
    def nx(self) -> int:
        return self.samples.shape[1]

    @property
    def ny(self) -> int:
        return self.samples.shape[0]

    @property
    def x(self) -> np.ndarray:
        return (np.arange(self.nx) - self.nx // 2) * self.pitch + self.origin[0]

    @property
    def y(self) -> np.ndarray:
        return (np.arange(self.ny) - self.ny // 2) * self.pitch + self.origin[1]

    @property
    def power(self) -> float:
        return float(np.sum(np.abs(self.samples) ** 2)) * self.pitch**2

    @property
    def wavenumber(self) -> float:
        return 2.0 * math.pi * self.ambient_index / self.wavelength


@dataclass(frozen=True)
class ThinLensPhase:
    """Ideal thin lens: multiplies by exp(-i k r^2 / (2 f)) about `offset`."""

    focal_length: float
    offset: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.focal_length == 0:
            raise InvalidInputError("focal_length must be nonzero")


@dataclass(frozen=True)
class WedgePhase:
    """Thin wedge deflecting the beam by (tilt_x, tilt_y) radians.

    The phase ramp is exp(i k (sin(tilt_x) x + sin(tilt_y) y)), so a wedge
    with tilt_y = -t cancels a source launched with tilt (0, +t).
    index_step records the refractive contrast of the physical prism; the
    implied facet slope is atan(sin(tilt) / index_step).
    """

    tilt_x: float
    tilt_y: float
    index_step: float = 0.52

    def __post_init__(self):
        if max(abs(self.tilt_x), abs(self.tilt_y)) >= _TILT_LIMIT:
            raise InvalidInputError("wedge tilt magnitude must stay below 30 degrees")
        if not self.index_step > 0:
            raise InvalidInputError("index_step must be positive")


@dataclass(frozen=True)
class RectAperture:
    width_x: float
    width_y: float
    offset: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if not (self.width_x > 0 and self.width_y > 0):
            raise InvalidInputError("aperture widths must be positive")


@dataclass(frozen=True)
class CircAperture:
    radius: float
    offset: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if not self.radius > 0:
            raise InvalidInputError("aperture radius must be positive")


PhaseElement = Union[ThinLensPhase, WedgePhase, RectAperture, CircAperture]


def make_gaussian_field(
    beam: AstigmaticGaussian,
    tilt: tuple[float, float],
    grid: tuple[int, int, float],
    center: tuple[float, float] = (0.0, 0.0),
) -> ScalarField:
    """Sample a tilted elliptical Gaussian at its waist, normalised to unit power.

    `grid` is (nx, ny, pitch). The pitch must resolve the smaller waist
    with at least four samples and the window must span eight times the
    larger waist, otherwise a SamplingError explains the required grid.
    """

    nx, ny, pitch = grid
    _check_grid(nx, ny, pitch)
    w0x, w0y = beam.x.waist_radius, beam.y.waist_radius
    if abs(beam.x.ambient_index - beam.y.ambient_index) > 1e-12:
        raise InvalidInputError("x and y axes must share one ambient medium")

    w_min, w_max = min(w0x, w0y), max(w0x, w0y)
    if pitch > w_min / 4.0:
        raise SamplingError(
            f"pitch {pitch:.3e} m too coarse for waist {w_min:.3e} m; "
            f"need pitch <= {w_min / 4.0:.3e} m"
        )
    if min(nx, ny) * pitch < 8.0 * w_max:
        raise SamplingError(
            f"window {min(nx, ny) * pitch:.3e} m too small for waist {w_max:.3e} m; "
            f"need width >= {8.0 * w_max:.3e} m"
        )

    x = (np.arange(nx) - nx // 2) * pitch - center[0]
    y = (np.arange(ny) - ny // 2) * pitch - center[1]
    xg, yg = x[None, :], y[:, None]
    envelope = np.exp(-(xg / w0x) ** 2 - (yg / w0y) ** 2)
    k = 2.0 * math.pi * beam.x.ambient_index / beam.wavelength
    samples = envelope * np.exp(
        1j * k * (math.sin(tilt[0]) * xg + math.sin(tilt[1]) * yg)
    )
    norm = math.sqrt(np.sum(np.abs(samples) ** 2) * pitch**2)
    if norm == 0.0:
        raise InvalidInputError(
            f"beam centered at ({center[0]:.3e}, {center[1]:.3e}) m carries no "
            "power inside the sampled window"
        )
    samples /= norm
    return ScalarField(samples, pitch, beam.wavelength, beam.x.ambient_index)


def _intensity_moments(intensity: np.ndarray, x: np.ndarray, y: np.ndarray):
    total = float(intensity.sum())
    if total <= 0:
        raise InvalidInputError("field has no power")
    ix = intensity.sum(axis=0)
    iy = intensity.sum(axis=1)
    cx = float(ix @ x) / total
    cy = float(iy @ y) / total
    vx = float(ix @ (x - cx) ** 2) / total
    vy = float(iy @ (y - cy) ** 2) / total
    return cx, cy, vx, vy


def _window_guard(field: ScalarField, spectrum: np.ndarray, distance: float):
    """Raise PropagationWindowError if the beam would leave the safe window."""
    intensity = np.abs(field.samples) ** 2
    cx, cy, vx, vy = _intensity_moments(intensity, field.x, field.y)

    # angular moments from the propagating part of the spectrum;
    # fx maps to sin(theta) = lambda fx / n
    fx = sfft.fftfreq(field.nx, field.pitch)
    fy = sfft.fftfreq(field.ny, field.pitch)
    lam = field.wavelength / field.ambient_index
    spec_int = np.abs(spectrum) ** 2
    stot = float(spec_int.sum())
    if stot <= 0:
        raise InvalidInputError("field has no power")
    sx = spec_int.sum(axis=0)
    sy = spec_int.sum(axis=1)
    mean_sx = lam * float(sx @ fx) / stot
    mean_sy = lam * float(sy @ fy) / stot
    var_sx = lam**2 * float(sx @ fx**2) / stot - mean_sx**2
    var_sy = lam**2 * float(sy @ fy**2) / stot - mean_sy**2

    # x-theta covariance via the local transverse momentum density
    k = field.wavenumber
    dx_field = sfft.ifft2(spectrum * (2j * math.pi * fx)[None, :], workers=-1)
    dy_field = sfft.ifft2(spectrum * (2j * math.pi * fy)[:, None], workers=-1)
    conj = np.conj(field.samples)
    px = np.imag(conj * dx_field) / k
    py = np.imag(conj * dy_field) / k
    itot = float(intensity.sum())
    cov_x = float(np.sum(px * field.x[None, :])) / itot - cx * mean_sx
    cov_y = float(np.sum(py * field.y[:, None])) / itot - cy * mean_sy

    d = distance
    for label, c, mean_s, var, cov, var_s, n_axis, centre0 in (
        ("x", cx, mean_sx, vx, cov_x, var_sx, field.nx, field.origin[0]),
        ("y", cy, mean_sy, vy, cov_y, var_sy, field.ny, field.origin[1]),
    ):
        var_pred = max(var + 2.0 * d * cov + d * d * var_s, 0.0)
        radius = 2.0 * math.sqrt(var_pred)  # 1/e^2 radius of a Gaussian
        centre = c + d * mean_s / max(math.sqrt(1.0 - mean_s**2), 1e-6)
        extent = abs(centre - centre0) + _WINDOW_FACTOR * radius
        half = 0.5 * n_axis * field.pitch
        if extent > half:
            raise PropagationWindowError(
                f"propagating {distance:.3e} m would move the beam "
                f"({label}-extent {extent:.3e} m) outside the safe "
                f"half-window {half:.3e} m; enlarge the grid or split "
                "the propagation"
            )


def _transfer(field: ScalarField, distance: float) -> np.ndarray:
    fx = sfft.fftfreq(field.nx, field.pitch)
    fy = sfft.fftfreq(field.ny, field.pitch)
    kx = (2.0 * math.pi * fx)[None, :]
    ky = (2.0 * math.pi * fy)[:, None]
    k = field.wavenumber
    kz_sq = k * k - kx * kx - ky * ky
    mask = kz_sq > 0.0
    kz = np.sqrt(np.where(mask, kz_sq, 0.0))
    return np.where(mask, np.exp(1j * kz * distance), 0.0)


def angular_spectrum_propagate(field: ScalarField, distance: float) -> ScalarField:
    """Propagate by `distance` (may be negative). Zero distance is the identity."""
    if distance == 0.0:
        return replace(field, samples=field.samples.copy())
    spectrum = sfft.fft2(field.samples, workers=-1)
    _window_guard(field, spectrum, distance)
    out = sfft.ifft2(spectrum * _transfer(field, distance), workers=-1)
    return replace(field, samples=out)


def _propagation_scan(field: ScalarField, distances: Sequence[float]):
    """Yield (distance, propagated samples) with one forward FFT total.

    The window guard runs once at the extreme distances of the scan.
    """
    spectrum = sfft.fft2(field.samples, workers=-1)
    for d in (min(distances), max(distances)):
        if d != 0.0:
            _window_guard(field, spectrum, d)
    for d in distances:
        if d == 0.0:
            yield d, field.samples.copy()
        else:
            yield d, sfft.ifft2(spectrum * _transfer(field, d), workers=-1)


def _element_mask(field: ScalarField, element: PhaseElement) -> np.ndarray:
    ox, oy = element.offset
    xg = field.x[None, :] - ox
    yg = field.y[:, None] - oy
    if isinstance(element, RectAperture):
        inside = (np.abs(xg) <= element.width_x / 2.0) & (
            np.abs(yg) <= element.width_y / 2.0
        )
    else:
        inside = xg * xg + yg * yg <= element.radius**2
    if not inside.any():
        raise InvalidGeometryError("aperture lies entirely outside the grid")
    return inside


def apply_element(field: ScalarField, element: PhaseElement) -> ScalarField:
    """Apply a thin element in place at the field's plane.

    Apertures zero the field outside their opening and fold the removed
    power into the returned field's cumulative clipped_fraction.
    """
    k = field.wavenumber
    if isinstance(element, ThinLensPhase):
        xg = field.x[None, :] - element.offset[0]
        yg = field.y[:, None] - element.offset[1]
        phase = np.exp(-1j * k * (xg * xg + yg * yg) / (2.0 * element.focal_length))
        return replace(field, samples=field.samples * phase)
    if isinstance(element, WedgePhase):
        ramp = np.exp(
            1j
            * k
            * (
                math.sin(element.tilt_x) * field.x[None, :]
                + math.sin(element.tilt_y) * field.y[:, None]
            )
        )
        return replace(field, samples=field.samples * ramp)
    if isinstance(element, (RectAperture, CircAperture)):
        inside = _element_mask(field, element)
        before = field.power
        out = np.where(inside, field.samples, 0.0)
        after = float(np.sum(np.abs(out) ** 2)) * field.pitch**2
        step = 0.0 if before <= 0 else max(0.0, 1.0 - after / before)
        cumulative = field.clipped_fraction + (1.0 - field.clipped_fraction) * step
        return replace(field, samples=out, clipped_fraction=cumulative)
    raise InvalidInputError(f"unknown element type {type(element).__name__}")


@dataclass(frozen=True)
class SpotMetrics:
    centroid: tuple[float, float]
    mfd_moment: tuple[float, float]
    mfd_fit: tuple[float, float]
    peak_intensity: float
    power: float
    clipped_fraction: float
    fit_failed: bool


def _gauss1d(x, amplitude, centre, radius):
    return amplitude * np.exp(-2.0 * ((x - centre) / radius) ** 2)


def _fit_profile(coords: np.ndarray, profile: np.ndarray, c0: float, w0: float):
    peak = float(profile.max())
    if peak <= 0 or not w0 > 0:
        return None
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", OptimizeWarning)
            popt, _ = curve_fit(
                _gauss1d, coords, profile, p0=[peak, c0, w0], maxfev=2000
            )
    except (RuntimeError, ValueError):
        return None
    if not np.isfinite(popt).all() or popt[2] <= 0:
        return None
    return abs(float(popt[2]))

def _interp_row(intensity: np.ndarray, coords: np.ndarray, value: float, axis: int):
    """Linear interpolation of a 1-d slice through `value` along `axis`."""
    idx = float(np.interp(value, coords, np.arange(len(coords))))
    lo = int(np.clip(math.floor(idx), 0, len(coords) - 2))
    frac = idx - lo
    if axis == 0:
        return (1.0 - frac) * intensity[lo, :] + frac * intensity[lo + 1, :]
    return (1.0 - frac) * intensity[:, lo] + frac * intensity[:, lo + 1]


def spot_metrics(field: ScalarField) -> SpotMetrics:
    """Centroid, second-moment and fitted mode-field diameters of |E|^2.

    mfd_moment is four times the intensity standard deviation per axis
    (equal to the 1/e^2 diameter for a Gaussian). mfd_fit comes from 1-d
    least-squares Gaussian fits to slices through the centroid; if a fit
    does not converge the moment value is reported and fit_failed is set.
    """
    intensity = np.abs(field.samples) ** 2
    cx, cy, vx, vy = _intensity_moments(intensity, field.x, field.y)
    mfd_mx = 4.0 * math.sqrt(max(vx, 0.0))
    mfd_my = 4.0 * math.sqrt(max(vy, 0.0))

    profile_x = _interp_row(intensity, field.y, cy, axis=0)
    profile_y = _interp_row(intensity, field.x, cx, axis=1)
    wx = _fit_profile(field.x, profile_x, cx, mfd_mx / 2.0)
    wy = _fit_profile(field.y, profile_y, cy, mfd_my / 2.0)
    failed = wx is None or wy is None

    return SpotMetrics(
        centroid=(cx, cy),
        mfd_moment=(mfd_mx, mfd_my),
        mfd_fit=(2.0 * wx if wx else mfd_mx, 2.0 * wy if wy else mfd_my),
        peak_intensity=float(intensity.max()),
        power=field.power,
        clipped_fraction=field.clipped_fraction,
        fit_failed=failed,
    )


@dataclass(frozen=True)
class FocusResult:
    z_focus: float
    metrics: SpotMetrics
    field_at_focus: ScalarField
    exit_field: ScalarField
    exit_z: float
    axial_profile: dict


def find_focus(
    source: ScalarField,
    elements: Sequence[tuple[float, PhaseElement]],
    z_search: tuple[float, float, int],
) -> FocusResult:
    """Propagate through positioned elements and locate the x-width minimum.

    `elements` is a list of (z, element) with strictly increasing z >= 0;
    the source sits at z = 0. The search samples `steps` planes uniformly
    over [z_min, z_max] (absolute coordinates past the last element),
    minimises the second-moment x diameter, and refines with a parabola
    through the bracketing triple. The focus must be interior to the
    window or FocusNotBracketedError is raised.
    """
    z_min, z_max, steps = z_search
    if steps < 16:
        raise InvalidInputError("z_search needs at least 16 steps")
    if not z_min < z_max:
        raise InvalidInputError("z_search window is empty")

    z_elements = [z for z, _ in elements]
    if any(z < 0 for z in z_elements) or any(
        b - a < 0 for a, b in zip(z_elements, z_elements[1:])
    ):
        raise InvalidInputError("element positions must be non-decreasing and >= 0")
    z_exit = z_elements[-1] if z_elements else 0.0
    if z_min < z_exit:
        raise InvalidInputError("z_search must start past the last element")

    field = source
    z_now = 0.0
    for z_el, el in elements:
        field = angular_spectrum_propagate(field, z_el - z_now)
        field = apply_element(field, el)
        z_now = z_el
    exit_field = field

    zs = np.linspace(z_min, z_max, int(steps))
    widths = np.empty(len(zs))
    for i, (_, samples) in enumerate(
        _propagation_scan(exit_field, list(zs - z_now))
    ):
        intensity = np.abs(samples) ** 2
        _, _, vx, _ = _intensity_moments(intensity, exit_field.x, exit_field.y)
        widths[i] = 4.0 * math.sqrt(max(vx, 0.0))

    i_min = int(np.argmin(widths))
    if i_min == 0 or i_min == len(zs) - 1:
        raise FocusNotBracketedError(
            f"x-width minimum sits at the {'near' if i_min == 0 else 'far'} edge "
            f"of the search window [{z_min:.3e}, {z_max:.3e}] m"
        )

    # parabolic refinement through the bracketing triple
    z0, z1, z2 = zs[i_min - 1 : i_min + 2]
    w0_, w1_, w2_ = widths[i_min - 1 : i_min + 2]
    denom = (w0_ - 2.0 * w1_ + w2_)
    if abs(denom) > 0:
        z_star = z1 + 0.5 * (zs[1] - zs[0]) * (w0_ - w2_) / denom
        z_star = float(np.clip(z_star, z0, z2))
    else:
        z_star = float(z1)

    focus_field = angular_spectrum_propagate(exit_field, z_star - z_now)
    metrics = spot_metrics(focus_field)
    centroids = [
        _intensity_moments(np.abs(s) ** 2, exit_field.x, exit_field.y)[:2]
        for _, s in _propagation_scan(exit_field, [z - z_now for z in (z0, z1, z2)])
    ]
    profile = {
        "z": zs,
        "mfd_moment_x": widths,
        "refine_z": np.array([z0, z1, z2]),
        "refine_centroid_x": np.array([c[0] for c in centroids]),
        "refine_centroid_y": np.array([c[1] for c in centroids]),
    }
    return FocusResult(
        z_focus=z_star,
        metrics=metrics,
        field_at_focus=focus_field,
        exit_field=exit_field,
        exit_z=z_now,
        axial_profile=profile,
    )


def write_field_sfld(field: ScalarField, path) -> None:
    """Binary dump: 64-byte header then float32 little-endian re/im pairs,
    row-major over [ny, nx]."""
    header = _SFLD_HEADER.pack(
        SFLD_MAGIC,
        1,
        field.nx,
        field.ny,
        field.clipped_fraction,
        field.pitch,
        field.wavelength,
        field.ambient_index,
        field.origin[0],
        field.origin[1],
    )
    header = header.ljust(SFLD_HEADER_SIZE, b"\0")
    data = np.empty((field.ny, field.nx, 2), dtype="<f4")
    data[..., 0] = field.samples.real
    data[..., 1] = field.samples.imag
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(data.tobytes())


def read_field_sfld(path) -> ScalarField:
    with open(path, "rb") as fh:
        raw = fh.read(SFLD_HEADER_SIZE)
        if len(raw) < SFLD_HEADER_SIZE:
            raise InvalidInputError("truncated field file")
        magic, version, nx, ny, clipped, pitch, wavelength, index, ox, oy = (
            _SFLD_HEADER.unpack(raw[: _SFLD_HEADER.size])
        )
        if magic != SFLD_MAGIC:
            raise InvalidInputError("not a field dump (bad magic)")
        if version != 1:
            raise InvalidInputError(f"unsupported field dump version {version}")
        data = np.frombuffer(fh.read(), dtype="<f4").reshape(ny, nx, 2)
    samples = data[..., 0].astype(np.float64) + 1j * data[..., 1].astype(np.float64)
    return ScalarField(
        samples, pitch, wavelength, index, (ox, oy), clipped_fraction=float(clipped)
    )


def write_field_csv(field: ScalarField, path) -> None:
    """CSV dump with columns x, y, re, im, intensity (one row per sample)."""
    xg, yg = np.meshgrid(field.x, field.y)
    cols = np.column_stack(
        [
            xg.ravel(),
            yg.ravel(),
            field.samples.real.ravel(),
            field.samples.imag.ravel(),
            (np.abs(field.samples) ** 2).ravel(),
        ]
    )
    np.savetxt(
        path,
        cols,
        delimiter=",",
        header="x_m,y_m,re,im,intensity",
        comments="",
        fmt="%.9e",
    )
