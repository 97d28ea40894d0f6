"""Two-photon SPDC state, heralding, and detection maps through a fiber.

Amplitudes are expressed through mode-space collection rows (see
:func:`fiberpiano.modes.collection_vectors`): for a detector with row w,
the amplitude of Schmidt mode a after the fiber is A_a = (w @ T)[s_a].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .modes import DetectorSpec, DimensionError, ModeBasis, collection_vectors, scan_vectors

__all__ = [
    "DetectorSpec", "TwoPhotonState", "HeraldedState", "CoincidenceMap",
    "InfeasibleSpectrumError", "ZeroHeraldError", "DegenerateError",
    "spdc_state", "herald", "herald_vector", "singles_map", "coincidence_map",
    "heralded_coincidence_map", "contrast", "effective_modes", "schmidt_estimate",
    "finite_size_contrast", "poisson_counts", "schmidt_amplitudes",
]


class InfeasibleSpectrumError(ValueError):
    pass


class ZeroHeraldError(ValueError):
    pass


class DegenerateError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class TwoPhotonState:
    schmidt_coeffs: np.ndarray = field(repr=False)
    schmidt_modes: np.ndarray = field(repr=False)
    kind: str = "geometric"

    @property
    def schmidt_number(self) -> float:
        return float(1.0 / np.sum(self.schmidt_coeffs ** 2))

    def amplitudes(self) -> np.ndarray:
        return np.sqrt(self.schmidt_coeffs)


@dataclass(frozen=True, eq=False)
class HeraldedState:
    coeffs: np.ndarray = field(repr=False)  # over Schmidt modes
    herald_probability: float
    schmidt_modes: np.ndarray = field(repr=False)

    def fiber_vector(self, n_modes: int) -> np.ndarray:
        """The heralded photon as a vector over all fiber modes."""
        psi = np.zeros(n_modes, dtype=complex)
        psi[self.schmidt_modes] = self.coeffs
        return psi


@dataclass(frozen=True, eq=False)
class CoincidenceMap:
    xs: np.ndarray = field(repr=False)
    ys: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)  # (len(ys), len(xs))
    kind: str = "coincidence"
    metadata: dict = field(default_factory=dict)

    def total(self) -> float:
        return float(np.sum(self.values))

    def at(self, x: float, y: float) -> float:
        i = int(np.argmin(np.abs(self.ys - y)))
        j = int(np.argmin(np.abs(self.xs - x)))
        return float(self.values[i, j])


def _geometric_k(q: float, n: int) -> float:
    w = q ** np.arange(n)
    return float(w.sum() ** 2 / np.sum(w * w))


def spdc_state(K_target: float, n_modes: int, equal_weights: bool = False) -> TwoPhotonState:
    """Schmidt spectrum with Schmidt number ``K_target`` over ``n_modes`` modes.

    Default is a geometric spectrum lambda_a ~ q**a with q chosen so that
    1/sum(lambda**2) equals the target; ``equal_weights`` gives the
    maximally entangled spectrum lambda_a = 1/K on the first K modes.
    """
    if K_target < 1:
        raise InfeasibleSpectrumError("Schmidt number must be >= 1")
    if K_target > n_modes:
        raise InfeasibleSpectrumError(f"K={K_target} needs at least that many modes, got {n_modes}")
    idx = np.arange(n_modes)
    if equal_weights:
        k = int(round(K_target))
        if abs(k - K_target) > 1e-9:
            raise InfeasibleSpectrumError("equal-weight spectrum needs an integer Schmidt number")
        lam = np.where(idx < k, 1.0 / k, 0.0)
        return TwoPhotonState(lam, idx, "equal")
    if K_target == 1:
        q = 0.0
    elif K_target == n_modes:
        q = 1.0
    else:
        q = brentq(lambda q: _geometric_k(q, n_modes) - K_target, 0.0, 1.0, xtol=1e-15, rtol=1e-15)
    lam = q ** idx if q > 0 else (idx == 0).astype(float)
    lam = lam / lam.sum()
    return TwoPhotonState(lam, idx, "geometric")


def herald_vector(basis: ModeBasis, detector: DetectorSpec) -> np.ndarray:
    """Unit mode-space vector of a heralding detector's collection mode."""
    row = collection_vectors(basis, [detector])[0]
    # <g|phi_m> are the conjugated coefficients of g's projection
    h = row.conj()
    return h / np.linalg.norm(h)


def herald(state: TwoPhotonState, herald_mode) -> HeraldedState:
    """Condition the twin photon on detecting one photon in ``herald_mode``.

    ``herald_mode`` is given by its coefficients over the fiber modes.
    """
    h = np.asarray(herald_mode, dtype=complex)
    if abs(np.linalg.norm(h) - 1) > 1e-9:
        raise ValueError("herald mode must have unit norm")
    overlaps = h[state.schmidt_modes].conj()  # <h|phi_a>
    amp = state.amplitudes() * overlaps
    prob = float(np.sum(np.abs(amp) ** 2))
    if prob <= 1e-300:
        raise ZeroHeraldError("herald mode has no overlap with the Schmidt modes")
    return HeraldedState(amp / np.sqrt(prob), prob, state.schmidt_modes)


def schmidt_amplitudes(rows_t: np.ndarray, state: TwoPhotonState) -> np.ndarray:
    """A_a for each row of w @ T; last axis indexes Schmidt modes."""
    return rows_t[..., state.schmidt_modes]


def _check_dims(t: np.ndarray, basis: ModeBasis):
    if t.shape != (basis.n_modes, basis.n_modes):
        raise DimensionError(f"transmission matrix {t.shape} does not match {basis.n_modes} modes")


def _matrix(t) -> np.ndarray:
    return getattr(t, "matrix", t)


def singles_map(state: TwoPhotonState, t, basis: ModeBasis, template: DetectorSpec,
                xs, ys) -> CoincidenceMap:
    """S(x) = sum_a lambda_a |A_a(x)|^2 over the scan raster."""
    t = _matrix(t)
    _check_dims(t, basis)
    amps = schmidt_amplitudes(scan_vectors(basis, template, xs, ys) @ t, state)
    vals = np.sum(state.schmidt_coeffs * np.abs(amps) ** 2, axis=-1)
    return CoincidenceMap(np.asarray(xs), np.asarray(ys), vals, "singles")


def coincidence_map(state: TwoPhotonState, t, basis: ModeBasis, fixed: DetectorSpec,
                    template: DetectorSpec, xs, ys) -> CoincidenceMap:
    """C(x1; x2) = |sum_a sqrt(lambda_a) A_a(x1) A_a(x2)|^2 with x2 the fixed detector."""
    t = _matrix(t)
    _check_dims(t, basis)
    a_fixed = schmidt_amplitudes(collection_vectors(basis, [fixed])[0] @ t, state)
    amps = schmidt_amplitudes(scan_vectors(basis, template, xs, ys) @ t, state)
    vals = np.abs(amps @ (state.amplitudes() * a_fixed)) ** 2
    return CoincidenceMap(np.asarray(xs), np.asarray(ys), vals, "coincidence",
                          {"fixed_position": list(fixed.position)})


def heralded_coincidence_map(h: HeraldedState, t, basis: ModeBasis, template: DetectorSpec,
                             xs, ys) -> CoincidenceMap:
    """C(x) = p_herald |<g_x| T psi_h>|^2, a pure-state speckle."""
    if isinstance(h, TwoPhotonState):
        raise TypeError("heralded map needs a HeraldedState")
    t = _matrix(t)
    _check_dims(t, basis)
    psi = h.fiber_vector(basis.n_modes)
    vals = h.herald_probability * np.abs(scan_vectors(basis, template, xs, ys) @ (t @ psi)) ** 2
    return CoincidenceMap(np.asarray(xs), np.asarray(ys), vals, "heralded_coincidence")


def contrast(samples) -> float:
    """Speckle contrast std/mean (population std)."""
    s = np.asarray(samples, dtype=float).ravel()
    if s.size < 2:
        raise DegenerateError("contrast needs at least two samples")
    m = s.mean()
    if m <= 0:
        raise DegenerateError("contrast undefined for non-positive mean")
    return float(s.std() / m)


def effective_modes(contrast_value: float, n_modes: int | None = None) -> float:
    """Number of equally weighted modes implied by a speckle contrast.

    Without ``n_modes`` this is 1/C**2. With ``n_modes`` N it inverts the
    exact law for M modes mixed by an N x N Haar unitary,
    C**2 = (N/M - 1) / (N + 1), which tends to 1/C**2 for N >> M.
    """
    if not (contrast_value >= 0 and np.isfinite(contrast_value)):
        raise ValueError("contrast must be non-negative and finite")
    if n_modes is None:
        if contrast_value == 0:
            raise ValueError("zero contrast implies infinitely many modes")
        return 1.0 / contrast_value ** 2
    if n_modes < 1:
        raise ValueError("n_modes must be >= 1")
    return n_modes / (1.0 + contrast_value ** 2 * (n_modes + 1))


def schmidt_estimate(singles_contrast: float, coincidence_contrast: float,
                     n_modes: int | None = None) -> float:
    """Ratio of mode counts seen in singles and in coincidences.

    The plain estimate is 1/C_s**2 over 1/C_c**2. Passing the number of
    mixed modes ``n_modes`` applies the finite-size law of
    :func:`effective_modes` to both counts.
    """
    for c in (singles_contrast, coincidence_contrast):
        if not (c > 0 and np.isfinite(c)):
            raise ValueError("contrasts must be positive and finite")
    return effective_modes(singles_contrast, n_modes) / effective_modes(coincidence_contrast, n_modes)


def finite_size_contrast(K: int, n_modes: int) -> float:
    """Singles contrast of K equal-weight modes through an N x N Haar unitary.

    The collected intensities of the K modes are K components of a uniformly
    random unit vector in C^N, so their sum is Beta(K, N-K) distributed and
    the contrast is sqrt((N-K) / (K (N+1))). Tends to 1/sqrt(K) for N >> K.
    """
    if not 1 <= K <= n_modes:
        raise ValueError("need 1 <= K <= N")
    return float(np.sqrt((n_modes - K) / (K * (n_modes + 1))))


def poisson_counts(rate: float, integration_time: float, rng) -> int:
    if rate < 0:
        raise ValueError("rate must be non-negative")
    if integration_time <= 0:
        raise ValueError("integration_time must be positive")
    return int(rng.poisson(rate * integration_time))
