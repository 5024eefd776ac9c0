"""Truncated Fourier states on the d-torus.

Coefficients are stored on the centred box ``|k|_inf <= M`` as an array of
shape ``(2M+1,)*d``; entry ``[k_1+M, ..., k_d+M]`` multiplies ``exp(i k.x)``.
Spatial averages use the normalised measure on ``[0, 2 pi)^d``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from .lattice import ModeSet, as_mode


@lru_cache(maxsize=None)
def wave_numbers(dim: int, cutoff: int) -> tuple:
    """Per-axis broadcastable wave number arrays for the centred box."""
    k = np.arange(-cutoff, cutoff + 1)
    out = []
    for axis in range(dim):
        shape = [1] * dim
        shape[axis] = k.size
        out.append(k.reshape(shape))
    return tuple(out)


@lru_cache(maxsize=None)
def wave_norm_sq(dim: int, cutoff: int) -> np.ndarray:
    """``|k|^2`` on the centred box."""
    ks = wave_numbers(dim, cutoff)
    total = np.zeros((2 * cutoff + 1,) * dim)
    for k in ks:
        total = total + k.astype(float) ** 2
    total.setflags(write=False)
    return total


def sobolev_weight(dim: int, cutoff: int, s: float) -> np.ndarray:
    """Amplitude weight ``(1+|k|^2)^(s/2)``."""
    return (1.0 + wave_norm_sq(dim, cutoff)) ** (s / 2)


def mode_index(k, cutoff: int) -> tuple:
    k = as_mode(k)
    if max(abs(v) for v in k) > cutoff:
        raise IndexError(f"mode {k} outside cutoff {cutoff}")
    return tuple(v + cutoff for v in k)


def to_grid(coeffs: np.ndarray, n: int | None = None) -> np.ndarray:
    """Values on an ``n^d`` collocation grid (``n >= 2M+1``)."""
    dim = coeffs.ndim
    m = (coeffs.shape[0] - 1) // 2
    n = 2 * m + 1 if n is None else n
    if n < 2 * m + 1:
        raise ValueError("grid too coarse for the cutoff")
    full = np.zeros((n,) * dim, dtype=complex)
    lo = n // 2 - m
    full[(slice(lo, lo + 2 * m + 1),) * dim] = coeffs
    return np.fft.ifftn(np.fft.ifftshift(full)) * n ** dim


def from_grid(values: np.ndarray, cutoff: int) -> np.ndarray:
    """Fourier coefficients on the centred box from grid values."""
    n = values.shape[0]
    dim = values.ndim
    full = np.fft.fftshift(np.fft.fftn(values)) / n ** dim
    lo = n // 2 - cutoff
    return full[(slice(lo, lo + 2 * cutoff + 1),) * dim]


def padded_size(cutoff: int) -> int:
    """Grid size that resolves a cubic product without aliasing."""
    return 2 * (2 * cutoff + 1)


@dataclass
class SpectralState:
    """Fourier coefficients of a field at a given time."""

    dim: int
    cutoff: int
    coeffs: np.ndarray
    s: float | None = None
    time: float = 0.0

    def __post_init__(self):
        if self.s is None:
            self.s = self.dim / 2 + 0.1
        shape = (2 * self.cutoff + 1,) * self.dim
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        if self.coeffs.shape != shape:
            raise ValueError(f"coefficients must have shape {shape}, got {self.coeffs.shape}")
        if self.s <= self.dim / 2:
            raise ValueError(f"Sobolev index {self.s} must exceed d/2 = {self.dim / 2}")

    @classmethod
    def zeros(cls, dim: int, cutoff: int, s: float | None = None, time: float = 0.0):
        return cls(dim, cutoff, np.zeros((2 * cutoff + 1,) * dim, complex), s, time)

    @classmethod
    def from_modes(cls, dim: int, cutoff: int, amplitudes: dict, s: float | None = None,
                   time: float = 0.0):
        """State with the given ``{mode: coefficient}`` entries."""
        st = cls.zeros(dim, cutoff, s, time)
        for k, a in amplitudes.items():
            st.coeffs[mode_index(k, cutoff)] += a
        return st

    def copy(self, **changes) -> "SpectralState":
        out = replace(self, **changes)
        if "coeffs" not in changes:
            out.coeffs = self.coeffs.copy()
        return out

    def __getitem__(self, k) -> complex:
        return complex(self.coeffs[mode_index(k, self.cutoff)])

    def grid(self, n: int | None = None) -> np.ndarray:
        return to_grid(self.coeffs, n)

    def norm(self, s: float | None = None) -> float:
        return hs_norm(self, self.s if s is None else s)

    def __sub__(self, other: "SpectralState") -> "SpectralState":
        _check_compatible(self, other)
        return self.copy(coeffs=self.coeffs - other.coeffs)

    def __add__(self, other: "SpectralState") -> "SpectralState":
        _check_compatible(self, other)
        return self.copy(coeffs=self.coeffs + other.coeffs)


def _check_compatible(a: SpectralState, b: SpectralState):
    if a.dim != b.dim or a.cutoff != b.cutoff:
        raise ValueError("states live on different boxes")


def hs_norm(state: SpectralState, s: float | None = None) -> float:
    """``(sum_k (1+|k|^2)^s |u_k|^2)^(1/2)``."""
    s = state.s if s is None else s
    if s < 0:
        raise ValueError("Sobolev index must be non-negative")
    w = sobolev_weight(state.dim, state.cutoff, s)
    return float(np.sqrt(np.sum((w * np.abs(state.coeffs)) ** 2)))


def hs_norm_coeffs(coeffs: np.ndarray, s: float) -> np.ndarray:
    """H^s norms of a stack of coefficient arrays (leading axis is the stack)."""
    dim = coeffs.ndim - 1
    m = (coeffs.shape[1] - 1) // 2
    w = sobolev_weight(dim, m, s)
    return np.sqrt(np.sum((w * np.abs(coeffs)) ** 2, axis=tuple(range(1, coeffs.ndim))))


def rotation_phase(dim: int, cutoff: int, t: float) -> np.ndarray:
    """``exp(-i |k|^2 t)``: exponential basis to rotated basis."""
    return np.exp(-1j * wave_norm_sq(dim, cutoff) * t)


def rotate_basis(state: SpectralState, direction: str = "to_rotated") -> SpectralState:
    """Switch between ``e^{ikx}`` coefficients and coefficients of ``e^{i(kx+|k|^2 t)}``.

    ``"to_rotated"`` multiplies by ``exp(-i|k|^2 t)``; ``"to_exponential"`` undoes it.
    """
    phase = rotation_phase(state.dim, state.cutoff, state.time)
    if direction == "to_rotated":
        return state.copy(coeffs=state.coeffs * phase)
    if direction == "to_exponential":
        return state.copy(coeffs=state.coeffs * np.conj(phase))
    raise ValueError(f"unknown direction {direction!r}")


@dataclass
class Projection:
    """Orthogonal projection onto a coordinate set or the span of a frame.

    Parameters
    ----------
    modes : ModeSet, optional
        Coordinate projection onto these Fourier modes.
    frame : sequence of SpectralState, optional
        Spanning vectors; they are orthonormalised in ``inner``.
    inner : {"l2", "hs"}
        Inner product used for the frame projection.
    """

    modes: ModeSet | None = None
    frame: list | None = None
    inner: str = "l2"
    s: float = 0.0
    _basis: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if (self.modes is None) == (self.frame is None):
            raise ValueError("give exactly one of modes or frame")
        if self.inner not in ("l2", "hs"):
            raise ValueError("inner must be 'l2' or 'hs'")
        if self.frame is not None:
            vecs = np.array([self._weighted(f) for f in self.frame])
            q, r = np.linalg.qr(vecs.T)
            if np.min(np.abs(np.diag(r))) < 1e-12 * max(1.0, np.max(np.abs(r))):
                raise ValueError("frame vectors are linearly dependent")
            self._basis = q.T

    def _weight(self, f: SpectralState) -> np.ndarray:
        if self.inner == "l2":
            return np.ones_like(f.coeffs, dtype=float)
        return sobolev_weight(f.dim, f.cutoff, self.s)

    def _weighted(self, f: SpectralState) -> np.ndarray:
        return (self._weight(f) * f.coeffs).ravel()

    def coordinates(self, state: SpectralState) -> np.ndarray:
        """Coordinates of the projection in the orthonormalised frame."""
        if self._basis is None:
            raise ValueError("coordinates are defined for frame projections only")
        return np.conj(self._basis) @ self._weighted(state)

    def __call__(self, state: SpectralState) -> SpectralState:
        if self.modes is not None:
            mask = np.zeros(state.coeffs.shape, bool)
            for k in self.modes.members:
                if max(abs(v) for v in k) <= state.cutoff:
                    mask[mode_index(k, state.cutoff)] = True
            return state.copy(coeffs=np.where(mask, state.coeffs, 0))
        c = self.coordinates(state)
        flat = (c @ self._basis).reshape(state.coeffs.shape) / self._weight(state)
        return state.copy(coeffs=flat)


def project(state: SpectralState, projection: Projection) -> SpectralState:
    return projection(state)


def cubic_product(state: SpectralState) -> SpectralState:
    """Alias-free ``|u|^2 u`` truncated to the state's box."""
    n = padded_size(state.cutoff)
    u = state.grid(n)
    return state.copy(coeffs=from_grid(np.abs(u) ** 2 * u, state.cutoff))


def mass(state: SpectralState) -> float:
    """Mean of ``|u|^2``."""
    return float(np.sum(np.abs(state.coeffs) ** 2))


def energy(state: SpectralState) -> float:
    """Mean of ``|grad u|^2 / 2 + |u|^4 / 4``, quartic term evaluated without aliasing."""
    grad = 0.5 * float(np.sum(wave_norm_sq(state.dim, state.cutoff) * np.abs(state.coeffs) ** 2))
    u = state.grid(padded_size(state.cutoff))
    return grad + 0.25 * float(np.mean(np.abs(u) ** 4))


def write_state(state: SpectralState, prefix) -> tuple:
    """Write ``<prefix>.bin`` (little-endian complex128, row-major) and ``<prefix>.json``."""
    prefix = Path(prefix)
    bin_path = prefix.with_suffix(".bin")
    json_path = prefix.with_suffix(".json")
    bin_path.write_bytes(np.ascontiguousarray(state.coeffs, dtype="<c16").tobytes(order="C"))
    header = {"dim": state.dim, "cutoff": state.cutoff, "s": state.s, "time": state.time,
              "dtype": "complex128-le", "order": "row-major"}
    json_path.write_text(json.dumps(header, sort_keys=True, indent=1))
    return bin_path, json_path


def read_state(prefix) -> SpectralState:
    prefix = Path(prefix)
    header = json.loads(prefix.with_suffix(".json").read_text())
    shape = (2 * header["cutoff"] + 1,) * header["dim"]
    data = np.frombuffer(prefix.with_suffix(".bin").read_bytes(), dtype="<c16").reshape(shape)
    return SpectralState(header["dim"], header["cutoff"], data.astype(complex),
                         header["s"], header["time"])
