"""Relaxation seminorm of oscillating perturbations and end-point sensitivity.

For a perturbation ``phi(t, u)`` the seminorm is the largest H^s norm of
``int_t^t' phi(tau, u(tau)) d tau`` over pairs of partition times, with the
state taken along a nominal trajectory (and optionally frozen sample states).
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import trapezoid

from .integrator import IntegratorConfig, Trajectory, integrate
from .lattice import as_mode
from .program import Component, ControlProgram
from .state import (SpectralState, from_grid, hs_norm_coeffs, padded_size, sobolev_weight,
                    to_grid, wave_norm_sq)

MONOMIALS = {
    "source": lambda u: np.ones_like(u),
    "linear": lambda u: u,
    "conjugate": np.conj,
    "quadratic": lambda u: u * u,
    "modulus": lambda u: np.abs(u) ** 2,
}


@dataclass
class PerturbationProbe:
    """``phi(t, u) = w(t) exp(i rho(t)) exp(i a t / eps) W(x) m(u)``.

    ``kind`` selects the monomial ``m``: ``source`` (1), ``linear`` (u),
    ``conjugate`` (conj u), ``quadratic`` (u^2) or ``modulus`` (|u|^2).
    ``profile`` maps modes to the Fourier coefficients of ``W``.
    """

    eps: float
    profile: dict
    kind: str = "linear"
    frequency: float = 1.0
    envelope: Callable | None = None
    phase: Callable | None = None
    _grids: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.kind not in MONOMIALS:
            raise ValueError(f"unknown probe kind {self.kind!r}")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        self.profile = {as_mode(k): complex(v) for k, v in dict(self.profile).items()}

    @property
    def dim(self) -> int:
        return len(next(iter(self.profile)))

    def carrier(self, t):
        t = np.asarray(t, dtype=float)
        out = np.exp(1j * self.frequency * t / self.eps)
        if self.envelope is not None:
            out = out * self.envelope(t)
        if self.phase is not None:
            out = out * np.exp(1j * self.phase(t))
        return out

    def _profile_grid(self, n: int) -> np.ndarray:
        if n not in self._grids:
            m = max(max(abs(v) for v in k) for k in self.profile)
            box = np.zeros((2 * m + 1,) * self.dim, complex)
            for k, v in self.profile.items():
                box[tuple(c + m for c in k)] += v
            self._grids[n] = to_grid(box, n)
        return self._grids[n]

    def __call__(self, t, u_grid):
        """Grid values of ``phi``; signature used by the integrator."""
        w = self._profile_grid(u_grid.shape[0])
        return self.carrier(t) * w * MONOMIALS[self.kind](u_grid)

    def spectral(self, t, coeffs: np.ndarray) -> np.ndarray:
        """Fourier coefficients of ``phi(t, u)`` truncated to the box of ``coeffs``."""
        m = (coeffs.shape[0] - 1) // 2
        u = to_grid(coeffs, padded_size(max(m, self._profile_cutoff())))
        return from_grid(self(t, u), m)

    def _profile_cutoff(self) -> int:
        return max(max(abs(v) for v in k) for k in self.profile)

    def l1_norm(self, states: np.ndarray, times: np.ndarray, s: float) -> float:
        """Trapezoid ``int ||phi(t, u(t))||_{H^s} dt`` along sampled states."""
        vals = np.array([self.spectral(t, c) for t, c in zip(times, states)])
        return float(trapezoid(hs_norm_coeffs(vals, s), times))


def _interpolate(traj: Trajectory, times: np.ndarray) -> np.ndarray:
    """States at ``times`` by linear interpolation of rotated coefficients."""
    lam = wave_norm_sq(traj.dim, traj.cutoff)
    rot = traj.coeffs * np.exp(-1j * lam[None] * traj.times.reshape((-1,) + (1,) * traj.dim))
    flat = rot.reshape(rot.shape[0], -1)
    out = np.empty((times.size, flat.shape[1]), complex)
    for j in range(flat.shape[1]):
        out[:, j] = (np.interp(times, traj.times, flat[:, j].real)
                     + 1j * np.interp(times, traj.times, flat[:, j].imag))
    out = out.reshape((times.size,) + traj.coeffs.shape[1:])
    return out * np.exp(1j * lam[None] * times.reshape((-1,) + (1,) * traj.dim))


def _diameter(points: np.ndarray) -> float:
    """Largest Euclidean distance between rows."""
    gram = points @ np.conj(points).T
    sq = np.real(np.diag(gram))
    d2 = sq[:, None] + sq[None, :] - 2 * np.real(gram)
    return float(np.sqrt(max(d2.max(), 0.0)))


def relaxation_seminorm(probe: PerturbationProbe, horizon: float = 1.0, resolution: int = 2048,
                        trajectory: Trajectory | None = None, states=(), s: float | None = None,
                        cutoff: int | None = None) -> float:
    """Grid approximation of ``sup_{t,t'} ||int_t^t' phi||_{H^s}``.

    The state enters through ``trajectory`` (evaluated along the path) and
    through each frozen state in ``states``; with neither, the state is zero
    (only meaningful for ``source`` probes).
    """
    times = np.linspace(0.0, horizon, resolution)
    paths = []
    if trajectory is not None:
        s = trajectory.s if s is None else s
        paths.append(_interpolate(trajectory, times))
    for st in states:
        s = st.s if s is None else s
        paths.append(np.broadcast_to(st.coeffs, (times.size,) + st.coeffs.shape))
    if not paths:
        m = probe._profile_cutoff() if cutoff is None else cutoff
        s = probe.dim / 2 + 0.1 if s is None else s
        paths.append(np.zeros((times.size,) + (2 * m + 1,) * probe.dim, complex))
    best = 0.0
    for path in paths:
        dim = path.ndim - 1
        m = (path.shape[1] - 1) // 2
        vals = np.array([probe.spectral(t, c) for t, c in zip(times, path)])
        w = sobolev_weight(dim, m, s)
        flat = (vals * w[None]).reshape(times.size, -1)
        steps = 0.5 * (flat[1:] + flat[:-1]) * np.diff(times)[:, None]
        cum = np.vstack([np.zeros((1, flat.shape[1])), np.cumsum(steps, axis=0)])
        best = max(best, _diameter(cum))
    return best


@dataclass
class SeminormReport:
    """Seminorms and end-point deviations along an eps ladder."""

    eps: list
    seminorms: list
    deviations: list
    resolution: int
    horizon: float

    @property
    def constants(self) -> list:
        return [d / n if n > 0 else math.nan for d, n in zip(self.deviations, self.seminorms)]

    @property
    def ratios(self) -> list:
        """Deviation reduction factor per ladder step."""
        d = self.deviations
        return [a / b if b > 0 else math.inf for a, b in zip(d, d[1:])]

    @property
    def monotone(self) -> bool:
        return all(b < a for a, b in zip(self.deviations, self.deviations[1:]))

    def to_dict(self) -> dict:
        return {"eps": self.eps, "seminorms": self.seminorms, "deviations": self.deviations,
                "constants": self.constants, "ratios": self.ratios,
                "resolution": self.resolution, "horizon": self.horizon,
                "monotone": self.monotone}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["eps", "seminorm", "deviation", "constant"])
        for row in zip(self.eps, self.seminorms, self.deviations, self.constants):
            w.writerow([repr(float(v)) for v in row])
        return buf.getvalue()


def endpoint_deviation_study(initial: SpectralState, program: ControlProgram | None,
                             probe_for: Callable, eps_ladder, horizon: float = 1.0,
                             dt: float | None = None, resolution: int = 2048) -> SeminormReport:
    """Perturbed versus nominal runs for each ``eps``.

    ``probe_for(eps)`` returns a :class:`PerturbationProbe`.  All runs share
    one step size (the carrier rule for the smallest eps) so that the
    discretisation error of the nominal run cancels.
    """
    eps_ladder = [float(e) for e in eps_ladder]
    if dt is None:
        dt = min(1e-2, math.pi * min(eps_ladder) / 32)
    cfg = IntegratorConfig(dt=dt, horizon=horizon)
    nominal = integrate(initial, program, cfg)
    seminorms, deviations = [], []
    for eps in eps_ladder:
        probe = probe_for(eps)
        perturbed = integrate(initial, program, cfg, perturbation=probe)
        deviations.append(perturbed.sup_distance(nominal))
        seminorms.append(relaxation_seminorm(probe, horizon, resolution, trajectory=nominal))
    return SeminormReport(eps_ladder, seminorms, deviations, resolution, horizon)


@dataclass
class InputSignal:
    """Absolutely continuous input ``W(t) = sum_k W_k(t) f_k`` with ``W(0) = 0``."""

    dim: int
    values: dict
    rates: dict
    horizon: float

    def __post_init__(self):
        for k, f in self.values.items():
            if abs(complex(np.asarray(f(np.array([0.0])))[0])) > 1e-14:
                raise ValueError(f"input on mode {k} does not vanish at t=0")

    def program(self) -> ControlProgram:
        """Forcing ``dW/dt`` with exact increments."""
        comps = [Component(k, primitive=self.values[k], full=self.rates[k])
                 for k in sorted(self.values)]
        return ControlProgram(self.dim, comps, self.horizon)

    def box(self, t: np.ndarray, cutoff: int) -> np.ndarray:
        """Exponential-basis coefficients of ``W`` at times ``t``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.zeros((t.size,) + (2 * cutoff + 1,) * self.dim, complex)
        for k, f in self.values.items():
            lam = sum(v * v for v in k)
            out[(slice(None),) + tuple(v + cutoff for v in k)] = f(t) * np.exp(1j * lam * t)
        return out

    def rate_box(self, t: np.ndarray, cutoff: int) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.zeros((t.size,) + (2 * cutoff + 1,) * self.dim, complex)
        for k, f in self.rates.items():
            out[(slice(None),) + tuple(v + cutoff for v in k)] = f(t)
        return out

    def minus(self, other: "InputSignal") -> "InputSignal":
        keys = sorted(set(self.values) | set(other.values))
        zero = lambda t: np.zeros_like(np.asarray(t, dtype=float), dtype=complex)
        vals = {k: (lambda a, b: lambda t: a(t) - b(t))(self.values.get(k, zero),
                                                           other.values.get(k, zero)) for k in keys}
        rates = {k: (lambda a, b: lambda t: a(t) - b(t))(self.rates.get(k, zero),
                                                          other.rates.get(k, zero)) for k in keys}
        return InputSignal(self.dim, vals, rates, self.horizon)

    def norms(self, cutoff: int, s: float, n: int = 4096):
        """``(L1 norm, W^{1,1} norm)`` in time of H^s norms in space."""
        t = np.linspace(0.0, self.horizon, n + 1)
        mid = 0.5 * (t[1:] + t[:-1])
        val = hs_norm_coeffs(self.box(mid, cutoff), s)
        rate = hs_norm_coeffs(self.rate_box(mid, cutoff), s)
        h = self.horizon / n
        l1 = float(np.sum(val) * h)
        return l1, l1 + float(np.sum(rate) * h)


def random_input(modes, rng: np.random.Generator, radius: float, horizon: float = 1.0,
                 cutoff: int = 8, s: float = 1.1, harmonics: int = 3) -> InputSignal:
    """Random trigonometric input with ``W(0) = 0`` scaled into the W^{1,1} ball."""
    modes = [as_mode(k) for k in modes]
    dim = len(modes[0])
    coef = {k: rng.normal(size=harmonics) + 1j * rng.normal(size=harmonics) for k in modes}
    freqs = np.pi * np.arange(1, harmonics + 1) / horizon

    def make(c, scale):
        val = lambda t: scale * (np.sin(np.multiply.outer(np.asarray(t, float), freqs)) @ c)
        rate = lambda t: scale * (np.cos(np.multiply.outer(np.asarray(t, float), freqs)) @ (c * freqs))
        return val, rate

    raw = InputSignal(dim, {k: make(coef[k], 1.0)[0] for k in modes},
                      {k: make(coef[k], 1.0)[1] for k in modes}, horizon)
    _, total = raw.norms(cutoff, s)
    scale = radius * rng.uniform(0.3, 1.0) / total
    pairs = {k: make(coef[k], scale) for k in modes}
    return InputSignal(dim, {k: p[0] for k, p in pairs.items()},
                       {k: p[1] for k, p in pairs.items()}, horizon)


def substituted_trajectory(initial: SpectralState, signal: InputSignal,
                           config: IntegratorConfig) -> np.ndarray:
    """``u*(t) = u(t) - i W(t)`` where ``u`` is driven by ``dW/dt``."""
    traj = integrate(initial, signal.program(), config)
    return traj.times, traj.coeffs - 1j * signal.box(traj.times, initial.cutoff)


def endpoint_lipschitz_probe(first: InputSignal, second: InputSignal, initial: SpectralState,
                             radius: float = 1.0, dt: float = 1e-3) -> dict:
    """Deviation of substituted trajectories relative to the L1 input distance."""
    s = initial.s
    for sig in (first, second):
        _, w11 = sig.norms(initial.cutoff, s)
        if w11 > radius * (1 + 1e-9):
            raise ValueError(f"input W^(1,1) norm {w11:.4g} exceeds radius {radius}")
    cfg = IntegratorConfig(dt=dt, horizon=first.horizon)
    _, a = substituted_trajectory(initial, first, cfg)
    _, b = substituted_trajectory(initial, second, cfg)
    deviation = float(np.max(hs_norm_coeffs(b - a, s)))
    distance, _ = second.minus(first).norms(initial.cutoff, s)
    ratio = deviation / distance if distance > 0 else math.nan
    return {"deviation": deviation, "input_distance": distance, "ratio": ratio}


def lipschitz_study(initial: SpectralState, modes, pairs: int = 20, radius: float = 1.0,
                    seed: int = 0, dt: float = 1e-3) -> dict:
    """Ratio statistics over random input pairs."""
    rng = np.random.default_rng(seed)
    ratios = []
    for _ in range(pairs):
        w1 = random_input(modes, rng, radius, cutoff=initial.cutoff, s=initial.s)
        w2 = random_input(modes, rng, radius, cutoff=initial.cutoff, s=initial.s)
        ratios.append(endpoint_lipschitz_probe(w1, w2, initial, radius, dt)["ratio"])
    r = np.array(ratios)
    return {"ratios": r.tolist(), "max": float(r.max()), "median": float(np.median(r)),
            "finite": bool(np.all(np.isfinite(r)))}
