"""Guided modes of a parabolic graded-index fiber and field rendering.

The basis is the Laguerre-Gauss family of the equivalent parabolic-index
waveguide. All lengths are in micrometres.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial, pi, sqrt

import numpy as np
from scipy.special import eval_genlaguerre


class CapacityError(ValueError):
    """Requested more modes than the fiber guides."""


class ResolutionError(ValueError):
    """Sampling grid cannot resolve the fundamental mode."""


class GeometryError(ValueError):
    """Detector placed outside the sampling grid."""


class DimensionError(ValueError):
    """Vector or matrix size does not match the basis."""


MIN_SAMPLES_PER_SIDE = 64
MIN_SAMPLES_PER_WAIST = 8


@dataclass(frozen=True)
class FiberSpec:
    core_radius: float = 25.0  # um
    numerical_aperture: float = 0.2
    wavelength: float = 807.6  # nm
    mode_truncation: int = 30

    def __post_init__(self):
        if self.core_radius <= 0:
            raise ValueError("core_radius must be positive")
        if not 0 < self.numerical_aperture < 1:
            raise ValueError("numerical_aperture must lie in (0, 1)")
        if self.wavelength <= 0:
            raise ValueError("wavelength must be positive")
        if self.mode_truncation < 1:
            raise ValueError("mode_truncation must be >= 1")

    @property
    def v_number(self) -> float:
        return 2 * pi * self.core_radius * self.numerical_aperture / (self.wavelength * 1e-3)

    @property
    def capacity(self) -> int:
        """Guided modes per polarization, V**2 / 8 for a parabolic profile."""
        return int(self.v_number ** 2 / 8)

    @property
    def mode_waist(self) -> float:
        """1/e field radius of the fundamental mode, sqrt(a * lambda / (pi * NA))."""
        return sqrt(self.core_radius * self.wavelength * 1e-3 / (pi * self.numerical_aperture))


@dataclass(frozen=True)
class GridSpec:
    side: float = 120.0  # um
    samples: int = 256

    @property
    def spacing(self) -> float:
        return self.side / self.samples

    @property
    def axis(self) -> np.ndarray:
        # cell-centred samples, symmetric about 0
        return (np.arange(self.samples) - (self.samples - 1) / 2) * self.spacing

    @property
    def cell_area(self) -> float:
        return self.spacing ** 2

    def contains(self, x: float, y: float) -> bool:
        half = self.side / 2
        return -half <= x <= half and -half <= y <= half


@dataclass(frozen=True)
class DetectorSpec:
    """Gaussian collection mode of a detector fiber.

    ``position`` is in fiber-output coordinates (the grid plane). The
    detector sits behind an imaging system of the given magnification,
    so a collection fiber of core radius ``collection_radius`` collects a
    Gaussian of waist ``collection_radius / magnification`` at the fiber
    facet.
    """

    position: tuple[float, float] = (0.0, 0.0)
    collection_radius: float = 25.0  # um, in the detector plane
    role: str = "scanning"
    magnification: float = 1.0

    def __post_init__(self):
        if self.collection_radius <= 0:
            raise ValueError("collection_radius must be positive")
        if self.magnification <= 0:
            raise ValueError("magnification must be positive")
        if self.role not in ("heralding", "fixed", "scanning"):
            raise ValueError(f"unknown detector role {self.role!r}")
        object.__setattr__(self, "position", (float(self.position[0]), float(self.position[1])))

    @property
    def waist(self) -> float:
        return self.collection_radius / self.magnification

    def moved(self, x: float, y: float) -> "DetectorSpec":
        return DetectorSpec((x, y), self.collection_radius, self.role, self.magnification)


@dataclass(frozen=True, eq=False)
class ModeBasis:
    fiber: FiberSpec
    grid: GridSpec
    labels: tuple[tuple[int, int], ...]
    waist: float
    capacity: int
    profiles: np.ndarray = field(repr=False)  # (N, samples, samples) complex

    @property
    def n_modes(self) -> int:
        return len(self.labels)

    def gram(self) -> np.ndarray:
        flat = self.profiles.reshape(self.n_modes, -1)
        return (flat.conj() @ flat.T) * self.grid.cell_area


@dataclass(frozen=True, eq=False)
class ComplexField:
    grid: GridSpec
    values: np.ndarray = field(repr=False)  # (samples, samples), indexed [y, x]

    @property
    def intensity(self) -> np.ndarray:
        return np.abs(self.values) ** 2

    def power(self) -> float:
        return float(np.sum(self.intensity) * self.grid.cell_area)


def mode_labels(count: int) -> list[tuple[int, int]]:
    """First ``count`` (p, l) labels ordered by mode group 2p+|l|.

    Within a group, lower |l| comes first and +l precedes -l.
    """
    labels = []
    group = 0
    while len(labels) < count:
        for abs_l in range(group % 2, group + 1, 2):
            p = (group - abs_l) // 2
            labels.append((p, abs_l))
            if abs_l:
                labels.append((p, -abs_l))
        group += 1
    return labels[:count]


def lg_profile(p: int, l: int, waist: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Unit-norm Laguerre-Gauss field LG_pl with 1/e field radius ``waist``."""
    r2 = x ** 2 + y ** 2
    rho2 = 2 * r2 / waist ** 2
    norm = sqrt(2 * factorial(p) / (pi * factorial(p + abs(l)))) / waist
    radial = rho2 ** (abs(l) / 2) * eval_genlaguerre(p, abs(l), rho2) * np.exp(-rho2 / 2)
    return norm * radial * np.exp(1j * l * np.arctan2(y, x))


def build_mode_basis(fiber: FiberSpec, grid: GridSpec | None = None) -> ModeBasis:
    grid = grid or GridSpec()
    capacity = fiber.capacity
    if fiber.mode_truncation > capacity:
        raise CapacityError(
            f"mode_truncation {fiber.mode_truncation} exceeds fiber capacity {capacity}"
        )
    waist = fiber.mode_waist
    if grid.samples < MIN_SAMPLES_PER_SIDE or waist / grid.spacing < MIN_SAMPLES_PER_WAIST:
        raise ResolutionError(
            f"grid spacing {grid.spacing:.3g} um gives {waist / grid.spacing:.1f} samples "
            f"per {waist:.3g} um waist (need {MIN_SAMPLES_PER_WAIST}, and "
            f">= {MIN_SAMPLES_PER_SIDE} samples per side)"
        )
    if grid.side < 3 * waist:
        raise ResolutionError(f"grid side {grid.side} um is under 3 fundamental waists")

    labels = mode_labels(fiber.mode_truncation)
    ax = grid.axis
    xx, yy = np.meshgrid(ax, ax)
    profiles = np.stack([lg_profile(p, l, waist, xx, yy) for p, l in labels])
    profiles.setflags(write=False)
    return ModeBasis(fiber, grid, tuple(labels), waist, capacity, profiles)


def render_field(coeffs, basis: ModeBasis) -> ComplexField:
    coeffs = np.asarray(coeffs, dtype=complex)
    if coeffs.shape != (basis.n_modes,):
        raise DimensionError(f"expected {basis.n_modes} coefficients, got shape {coeffs.shape}")
    values = np.tensordot(coeffs, basis.profiles, axes=1)
    return ComplexField(basis.grid, values)


def gaussian_1d(axis: np.ndarray, centre: float, waist: float) -> np.ndarray:
    """Gaussian field profile normalised to unit discrete L2 norm on ``axis``."""
    g = np.exp(-((axis - centre) ** 2) / waist ** 2)
    spacing = axis[1] - axis[0]
    return g / np.sqrt(np.sum(g ** 2) * spacing)


def detector_mode(detector: DetectorSpec, grid: GridSpec) -> ComplexField:
    """The detector's collection mode rendered on ``grid``."""
    ax = grid.axis
    gx = gaussian_1d(ax, detector.position[0], detector.waist)
    gy = gaussian_1d(ax, detector.position[1], detector.waist)
    return ComplexField(grid, np.outer(gy, gx).astype(complex))


def _check_inside(detector: DetectorSpec, grid: GridSpec):
    if not grid.contains(*detector.position):
        raise GeometryError(f"detector at {detector.position} lies outside the {grid.side} um grid")


def collection_amplitude(field_: ComplexField, detector: DetectorSpec) -> complex:
    """Overlap <g_det | field> of the field with the detector collection mode."""
    _check_inside(detector, field_.grid)
    g = detector_mode(detector, field_.grid).values
    return complex(np.sum(g.conj() * field_.values) * field_.grid.cell_area)


def collection_vectors(basis: ModeBasis, detectors) -> np.ndarray:
    """Mode-space collection functionals, one row per detector.

    Row ``d`` holds <g_d | phi_m> for every mode m, so the amplitude a
    field with mode coefficients ``c`` delivers to detector d is
    ``rows[d] @ c``. The Gaussians are separable, so the overlap reduces
    to two small matrix products per mode.
    """
    detectors = list(detectors)
    for det in detectors:
        _check_inside(det, basis.grid)
    ax = basis.grid.axis
    dA = basis.grid.cell_area
    rows = np.empty((len(detectors), basis.n_modes), dtype=complex)
    gx = np.stack([gaussian_1d(ax, d.position[0], d.waist) for d in detectors])
    gy = np.stack([gaussian_1d(ax, d.position[1], d.waist) for d in detectors])
    for m in range(basis.n_modes):
        # profiles are indexed [y, x]
        partial = gy @ basis.profiles[m]  # (D, x)
        rows[:, m] = np.einsum("dx,dx->d", partial, gx) * dA
    return rows


def scan_positions(half_width: float, points: int) -> tuple[np.ndarray, np.ndarray]:
    """Square raster of scan positions, returned as (x axis, y axis)."""
    ax = np.linspace(-half_width, half_width, points)
    return ax, ax.copy()


def scan_vectors(basis: ModeBasis, template: DetectorSpec, xs, ys) -> np.ndarray:
    """Collection rows for a raster scan, shape (len(ys), len(xs), N), row-major in y."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    half = basis.grid.side / 2
    if np.any(np.abs(xs) > half) or np.any(np.abs(ys) > half):
        raise GeometryError("scan raster extends outside the grid")
    ax = basis.grid.axis
    gx = np.stack([gaussian_1d(ax, x, template.waist) for x in xs])  # (nx, grid)
    gy = np.stack([gaussian_1d(ax, y, template.waist) for y in ys])  # (ny, grid)
    out = np.empty((len(ys), len(xs), basis.n_modes), dtype=complex)
    for m in range(basis.n_modes):
        out[:, :, m] = gy @ basis.profiles[m] @ gx.T
    return out * basis.grid.cell_area
