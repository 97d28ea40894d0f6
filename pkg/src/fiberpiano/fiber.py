"""Transmission matrix of a multimode fiber under actuator control.

The fiber is a chain of fixed Haar-random segments separated by actuators.
Actuator k at normalized stroke v contributes exp(i v H_k) followed by an
attenuation exp(-beta v^2 / 2) on the field:

    T(v) = S_M L_M U_M ... S_1 L_1 U_1 S_0

:func:`assemble_tm` is the reference construction (matrix exponentials).
:class:`FiberPiano` evaluates the same product through cached
eigendecompositions and is the path used inside optimization loops.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.linalg import expm

from .modes import DimensionError, ModeBasis, render_field


class DegeneratePatternError(ValueError):
    """Intensity pattern has zero variance."""


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def random_segment_unitary(n: int, seed=None) -> np.ndarray:
    """Haar-distributed n x n unitary via QR of a complex Ginibre matrix."""
    if n < 1:
        raise DimensionError("unitary dimension must be >= 1")
    rng = _rng(seed)
    z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


@lru_cache(maxsize=16)
def static_segments(n: int, count: int, seed: int) -> tuple[np.ndarray, ...]:
    """The count + 1 fixed segments S_0 .. S_count for a given seed."""
    rng = np.random.default_rng(seed)
    segs = tuple(random_segment_unitary(n, rng) for _ in range(count + 1))
    for s in segs:
        s.setflags(write=False)
    return segs


@dataclass(frozen=True, eq=False)
class ActuatorBank:
    count: int
    generators: tuple[np.ndarray, ...] = field(repr=False)
    coupling_strength: float
    loss_coefficient: float
    seed: int | None = None
    # optional mode-dependent loss: rotation R and relative loss weights d_m
    loss_rotation: np.ndarray | None = field(default=None, repr=False)
    loss_profile: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_modes(self) -> int:
        return self.generators[0].shape[0]

    @property
    def mode_dependent_loss(self) -> bool:
        return self.loss_profile is not None

    def loss_operator(self, v: float) -> np.ndarray | float:
        """Field attenuation of one actuator at stroke v."""
        if not self.mode_dependent_loss:
            return float(np.sqrt(np.exp(-self.loss_coefficient * v * v)))
        amp = np.sqrt(np.exp(-self.loss_coefficient * v * v * self.loss_profile))
        return (self.loss_rotation * amp) @ self.loss_rotation.conj().T


def build_actuator_bank(n: int, count: int = 37, coupling_strength: float = 1.0,
                        loss_coefficient: float = 0.03, seed=None,
                        mode_dependent_loss: bool = False) -> ActuatorBank:
    """Draw one Gaussian-Hermitian generator per actuator.

    Each generator is rescaled to operator norm ``coupling_strength``. With
    ``mode_dependent_loss`` the attenuation acts through a random diagonal
    (mean weight 1) in a Haar-rotated basis instead of a scalar.
    """
    if n < 1:
        raise DimensionError("n must be >= 1")
    if count < 1:
        raise ValueError("actuator count must be >= 1")
    if coupling_strength <= 0:
        raise ValueError("coupling_strength must be positive")
    if loss_coefficient < 0:
        raise ValueError("loss_coefficient must be non-negative")
    rng = _rng(seed)
    gens = []
    for _ in range(count):
        a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        h = (a + a.conj().T) / 2
        h *= coupling_strength / np.linalg.norm(h, 2)
        h = (h + h.conj().T) / 2
        h.setflags(write=False)
        gens.append(h)
    rot = prof = None
    if mode_dependent_loss:
        rot = random_segment_unitary(n, rng)
        prof = rng.exponential(1.0, n)
        prof *= n / prof.sum()
    return ActuatorBank(count, tuple(gens), float(coupling_strength), float(loss_coefficient),
                        seed if isinstance(seed, int) else None, rot, prof)


@dataclass(frozen=True, eq=False)
class TransmissionMatrix:
    matrix: np.ndarray = field(repr=False)
    seed: int | None = None
    displacements: tuple[float, ...] | None = None

    @property
    def n_modes(self) -> int:
        return self.matrix.shape[0]

    def unitarity_error(self) -> float:
        t = self.matrix
        return float(np.max(np.abs(t.conj().T @ t - np.eye(self.n_modes))))


def _check_displacements(bank: ActuatorBank, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (bank.count,):
        raise DimensionError(f"expected {bank.count} displacements, got shape {v.shape}")
    return v


def assemble_tm(bank: ActuatorBank, v, seed: int) -> TransmissionMatrix:
    v = _check_displacements(bank, v)
    segs = static_segments(bank.n_modes, bank.count, seed)
    t = segs[0].copy()
    for k in range(bank.count):
        step = expm(1j * v[k] * bank.generators[k]) @ t
        loss = bank.loss_operator(v[k])
        step = loss @ step if bank.mode_dependent_loss else loss * step
        t = segs[k + 1] @ step
    return TransmissionMatrix(t, seed, tuple(float(x) for x in v))


class FiberPiano:
    """Fast evaluator of T(v) and of selected rows of T(v), batched over v.

    With scalar loss, T(v) = exp(-beta |v|^2 / 2) B_M P_M B_{M-1} ... P_1 B_0,
    where P_k = diag(exp(i v_k e_k)) in the eigenbasis V_k of H_k and the
    B's absorb the static segments and basis changes.
    """

    def __init__(self, bank: ActuatorBank, seed: int):
        self.bank = bank
        self.seed = seed
        segs = static_segments(bank.n_modes, bank.count, seed)
        eig = [np.linalg.eigh(h) for h in bank.generators]
        self._evals = np.stack([e for e, _ in eig])  # (M, N)
        vecs = [vk for _, vk in eig]
        m = bank.count
        links = [vecs[0].conj().T @ segs[0]]
        for k in range(1, m):
            links.append(vecs[k].conj().T @ segs[k] @ vecs[k - 1])
        links.append(segs[m] @ vecs[m - 1])
        self._links = links  # B_0 .. B_M
        self._vecs = vecs
        if bank.mode_dependent_loss:
            self._segs = segs

    @property
    def n_modes(self) -> int:
        return self.bank.n_modes

    @property
    def count(self) -> int:
        return self.bank.count

    def _as_batch(self, v) -> tuple[np.ndarray, bool]:
        v = np.asarray(v, dtype=float)
        single = v.ndim == 1
        v = np.atleast_2d(v)
        if v.shape[1] != self.count:
            raise DimensionError(f"expected {self.count} displacements, got {v.shape[1]}")
        return v, single

    def _scalar_loss(self, v: np.ndarray) -> np.ndarray:
        return np.exp(-0.5 * self.bank.loss_coefficient * np.sum(v * v, axis=1))

    def tm(self, v) -> np.ndarray:
        """T(v); shape (N, N) for one vector or (P, N, N) for a batch."""
        v, single = self._as_batch(v)
        n = self.n_modes
        rows = np.broadcast_to(np.eye(n, dtype=complex), (len(v), n, n))
        out = self.rows(rows, v)
        return out[0] if single else out

    def rows(self, w, v) -> np.ndarray:
        """Row vectors w @ T(v).

        ``w`` is (R, N) or (P, R, N); returns (P, R, N), or (R, N) for a
        single displacement vector.
        """
        v, single = self._as_batch(v)
        w = np.asarray(w, dtype=complex)
        if w.shape[-1] != self.n_modes:
            raise DimensionError("row length does not match mode count")
        x = np.broadcast_to(w, (len(v),) + w.shape[-2:]) if w.ndim == 2 else w
        if self.bank.mode_dependent_loss:
            x = self._rows_general(x, v)
        else:
            links = self._links
            m = self.count
            x = x @ links[m]
            for k in range(m - 1, -1, -1):
                x = x * np.exp(1j * v[:, k, None] * self._evals[k])[:, None, :]
                x = x @ links[k]
            x = x * self._scalar_loss(v)[:, None, None]
        return x[0] if single else x

    def _rows_general(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        bank = self.bank
        segs = self._segs
        x = x @ segs[bank.count]
        for k in range(bank.count - 1, -1, -1):
            amp = np.sqrt(np.exp(-bank.loss_coefficient * v[:, k, None] ** 2 * bank.loss_profile))
            rot = bank.loss_rotation
            x = ((x @ rot) * amp[:, None, :]) @ rot.conj().T
            vk = self._vecs[k]
            x = ((x @ vk) * np.exp(1j * v[:, k, None] * self._evals[k])[:, None, :]) @ vk.conj().T
            x = x @ segs[k]
        return x

    def transmission(self, v) -> TransmissionMatrix:
        v = np.asarray(v, dtype=float)
        return TransmissionMatrix(self.tm(v), self.seed, tuple(float(x) for x in v))


def output_intensity(t: np.ndarray, input_coeffs, basis: ModeBasis) -> np.ndarray:
    return render_field(np.asarray(t) @ np.asarray(input_coeffs, dtype=complex), basis).intensity


def speckle_envelope(basis: ModeBasis) -> np.ndarray:
    """Disorder-averaged output intensity for a unit input, sum_m |phi_m|^2 / N."""
    return np.sum(np.abs(basis.profiles) ** 2, axis=0) / basis.n_modes


def speckle_correlation(t1, t2, input_coeffs, basis: ModeBasis, grid=None,
                        return_signed: bool = False, support: float = 0.1) -> float:
    """Pearson correlation of the two output intensity patterns.

    Both patterns are divided by the disorder-averaged envelope and compared
    where the envelope exceeds ``support`` times its peak, so the shared
    envelope of the guided modes does not count as correlation. The reported
    value is clipped to [0, 1]; pass ``return_signed`` to get the raw
    coefficient. ``grid`` must match the basis grid when given.
    """
    if grid is not None and grid != basis.grid:
        raise DimensionError("grid does not match basis grid")
    m1 = t1.matrix if isinstance(t1, TransmissionMatrix) else np.asarray(t1)
    m2 = t2.matrix if isinstance(t2, TransmissionMatrix) else np.asarray(t2)
    if m1.shape != m2.shape or m1.shape[1] != len(input_coeffs):
        raise DimensionError("transmission matrices and input must have matching dimensions")
    env = speckle_envelope(basis)
    mask = env >= support * env.max()
    i1 = output_intensity(m1, input_coeffs, basis)[mask] / env[mask]
    i2 = output_intensity(m2, input_coeffs, basis)[mask] / env[mask]
    d1 = i1 - i1.mean()
    d2 = i2 - i2.mean()
    s1 = np.sqrt(np.mean(d1 * d1))
    s2 = np.sqrt(np.mean(d2 * d2))
    if s1 == 0 or s2 == 0:
        raise DegeneratePatternError("intensity pattern has zero variance")
    r = float(np.mean(d1 * d2) / (s1 * s2))
    return r if return_signed else min(1.0, max(0.0, r))


def single_actuator_decorrelation(bank: ActuatorBank, seed: int, basis: ModeBasis,
                                  input_coeffs=None, actuators=None) -> float:
    """Mean speckle correlation between strokes -1 and +1 of one actuator."""
    piano = FiberPiano(bank, seed)
    if input_coeffs is None:
        input_coeffs = np.zeros(bank.n_modes, dtype=complex)
        input_coeffs[0] = 1.0
    actuators = range(bank.count) if actuators is None else actuators
    vals = []
    for k in actuators:
        lo = np.zeros(bank.count)
        hi = np.zeros(bank.count)
        lo[k], hi[k] = -1.0, 1.0
        vals.append(speckle_correlation(piano.tm(lo), piano.tm(hi), input_coeffs, basis,
                                        return_signed=True))
    return float(np.mean(vals))


def calibrate_coupling_strength(basis: ModeBasis, count: int, bank_seed: int, fiber_seed: int,
                                target: float = 0.3, lo: float = 0.05, hi: float = 4.0,
                                tol: float = 1e-3, actuators=None) -> float:
    """Smallest coupling strength at which one full-stroke actuator sweep
    drops the mean output speckle correlation to ``target``.

    Binary search; the bank generators are redrawn from the same seed at
    every trial so only the scale changes.
    """
    n = basis.n_modes

    def corr(sigma):
        bank = build_actuator_bank(n, count, sigma, 0.0, bank_seed)
        return single_actuator_decorrelation(bank, fiber_seed, basis, actuators=actuators)

    if corr(hi) > target:
        raise ValueError(f"even coupling_strength={hi} does not decorrelate below {target}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if corr(mid) > target:
            lo = mid
        else:
            hi = mid
    return hi


# -- export / import ---------------------------------------------------------

_BIN_MAGIC = b"FPTM"


def _header(tm: TransmissionMatrix) -> dict:
    return {
        "format": "fiberpiano-tm",
        "n_modes": tm.n_modes,
        "layout": "row-major, interleaved real/imag float64",
        "seed": tm.seed,
        "displacements": list(tm.displacements) if tm.displacements is not None else None,
    }


def save_tm(tm: TransmissionMatrix, path) -> Path:
    """Write ``tm`` as JSON (``.json``) or a binary dump (anything else).

    Binary layout: magic ``FPTM``, little-endian uint32 header length, UTF-8
    JSON header, then 2*N*N little-endian float64 values.
    """
    path = Path(path)
    flat = np.empty(2 * tm.matrix.size)
    flat[0::2] = tm.matrix.real.ravel()
    flat[1::2] = tm.matrix.imag.ravel()
    header = _header(tm)
    if path.suffix == ".json":
        header["data"] = [float(x) for x in flat]
        path.write_text(json.dumps(header))
    else:
        hbytes = json.dumps(header).encode()
        with path.open("wb") as fh:
            fh.write(_BIN_MAGIC + struct.pack("<I", len(hbytes)) + hbytes)
            fh.write(flat.astype("<f8").tobytes())
    return path


def load_tm(path) -> TransmissionMatrix:
    path = Path(path)
    if path.suffix == ".json":
        header = json.loads(path.read_text())
        flat = np.asarray(header.pop("data"), dtype=float)
    else:
        raw = path.read_bytes()
        if raw[:4] != _BIN_MAGIC:
            raise ValueError(f"{path} is not a transmission-matrix dump")
        (hlen,) = struct.unpack("<I", raw[4:8])
        header = json.loads(raw[8:8 + hlen])
        flat = np.frombuffer(raw[8 + hlen:], dtype="<f8")
    n = header["n_modes"]
    mat = (flat[0::2] + 1j * flat[1::2]).reshape(n, n)
    disp = header.get("displacements")
    return TransmissionMatrix(mat, header.get("seed"), tuple(disp) if disp is not None else None)
