"""Time integration of ``-i u_t + Lap u = |u|^2 u + V (+ phi(t, u))`` on the torus.

Two schemes share one interface:

* ``strang``: symmetric split step.  The free flow is exact in Fourier
  space (multiplier ``exp(+i|k|^2 t)``), the cubic flow is an exact pointwise
  phase rotation and forcing increments are integrated exactly in the
  rotated frame.
* ``picard``: Gauss-Legendre collocation of the Duhamel formula, solved by
  fixed-point iteration.  Used as an independent reference.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import BlowupDetected, ContractionFailure
from .program import ControlProgram
from .state import (SpectralState, from_grid, hs_norm, hs_norm_coeffs, padded_size,
                    to_grid, wave_norm_sq)


@dataclass(frozen=True)
class IntegratorConfig:
    """Discretisation settings.

    ``dealias="collocation"`` evaluates the cubic phase on the ``(2M+1)^d``
    grid, which keeps the step exactly unitary; ``"padded"`` uses a grid of
    twice that size and truncates.
    """

    dt: float
    horizon: float
    scheme: str = "strang"
    stride: int = 1
    dealias: str = "collocation"
    blowup_factor: float = 1e3
    picard_nodes: int = 4
    picard_tol: float = 1e-13
    picard_max_iter: int = 60
    step_rule: float = 32.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if self.scheme not in ("strang", "picard"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.dealias not in ("collocation", "padded"):
            raise ValueError(f"unknown dealias mode {self.dealias!r}")
        if self.stride < 1:
            raise ValueError("stride must be at least 1")

    @property
    def n_steps(self) -> int:
        return max(1, math.ceil(self.horizon / self.dt - 1e-9))

    @property
    def step(self) -> float:
        return self.horizon / self.n_steps

    def check_program(self, program: ControlProgram | None):
        """Enforce ``dt <= pi * eps / 32`` for oscillatory programs."""
        if program is None or program.min_epsilon is None:
            return
        limit = math.pi * program.min_epsilon / self.step_rule
        if self.step > limit * (1 + 1e-9):
            raise ValueError(f"dt={self.step:.3e} exceeds the carrier limit {limit:.3e}")

    @classmethod
    def for_program(cls, program: ControlProgram, horizon: float | None = None, **kw):
        """Largest step allowed by the carrier rule (and at most ``kw['dt']``)."""
        horizon = program.horizon if horizon is None else horizon
        dt = kw.pop("dt", 1e-2)
        if program.min_epsilon is not None:
            dt = min(dt, math.pi * program.min_epsilon / kw.get("step_rule", 32.0))
        return cls(dt=dt, horizon=horizon, **kw)


@dataclass
class Trajectory:
    """Snapshots of an integration."""

    times: np.ndarray
    coeffs: np.ndarray
    dim: int
    cutoff: int
    s: float

    def __len__(self) -> int:
        return self.times.size

    def __getitem__(self, i) -> SpectralState:
        return SpectralState(self.dim, self.cutoff, self.coeffs[i].copy(), self.s,
                             float(self.times[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @property
    def final(self) -> SpectralState:
        return self[-1]

    def sup_distance(self, other: "Trajectory", s: float | None = None) -> float:
        """``max_t ||u(t) - v(t)||_{H^s}`` over shared snapshots."""
        if self.times.shape != other.times.shape or not np.allclose(self.times, other.times):
            raise ValueError("trajectories have different snapshot times")
        s = self.s if s is None else s
        return float(np.max(hs_norm_coeffs(self.coeffs - other.coeffs, s)))


class _Stepper:
    def __init__(self, state: SpectralState, program, config, perturbation):
        self.dim, self.cutoff = state.dim, state.cutoff
        self.lam = wave_norm_sq(self.dim, self.cutoff)
        self.program = program
        self.config = config
        self.perturbation = perturbation
        self.n_grid = (2 * self.cutoff + 1 if config.dealias == "collocation"
                       else padded_size(self.cutoff))

    def source(self, coeffs, inc_vec, t_frame):
        if inc_vec is None:
            return coeffs
        box = self.program.scatter(inc_vec, self.cutoff)
        return coeffs + 1j * np.exp(1j * self.lam * t_frame) * box

    def perturb(self, u, t0, t1):
        """Classical RK4 for ``u_t = i phi(t, u)`` on grid values."""
        h = t1 - t0
        f = lambda t, v: 1j * self.perturbation(t, v)
        k1 = f(t0, u)
        k2 = f(t0 + h / 2, u + h / 2 * k1)
        k3 = f(t0 + h / 2, u + h / 2 * k2)
        k4 = f(t1, u + h * k3)
        return u + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)

    def step(self, coeffs, t, dt, inc1, inc2):
        tm = t + dt / 2
        half = np.exp(1j * self.lam * dt / 2)
        coeffs = self.source(coeffs * half, inc1, tm)
        u = to_grid(coeffs, self.n_grid)
        if self.perturbation is not None:
            u = self.perturb(u, t, tm)
        u = u * np.exp(1j * np.abs(u) ** 2 * dt)
        if self.perturbation is not None:
            u = self.perturb(u, tm, t + dt)
        coeffs = from_grid(u, self.cutoff)
        return self.source(coeffs, inc2, tm) * half


def step_strang(state: SpectralState, dt: float, program: ControlProgram | None = None,
                perturbation: Callable | None = None, dealias: str = "collocation"):
    """Advance one symmetric split step of length ``dt`` from ``state.time``."""
    cfg = IntegratorConfig(dt=dt, horizon=dt, dealias=dealias)
    stepper = _Stepper(state, program, cfg, perturbation)
    t = state.time
    inc1 = inc2 = None
    if program is not None and program.components:
        inc1, inc2 = program.increments(np.array([t, t + dt / 2, t + dt]))
    out = stepper.step(state.coeffs, t, dt, inc1, inc2)
    return state.copy(coeffs=out, time=t + dt)


def _guard(coeffs, s, scale, factor, t):
    norm = float(hs_norm_coeffs(coeffs[None], s)[0])
    if not np.isfinite(norm) or norm > factor * scale:
        raise BlowupDetected(f"H^s norm {norm:.3e} exceeded {factor:g} x {scale:.3e} at t={t:.4f}")


def integrate(state: SpectralState, program: ControlProgram | None,
              config: IntegratorConfig, perturbation: Callable | None = None) -> Trajectory:
    """Integrate from ``state.time`` over ``config.horizon``.

    Parameters
    ----------
    perturbation : callable, optional
        ``phi(t, u_grid) -> grid values`` added to the right-hand side as
        ``-i u_t + Lap u = |u|^2 u + V + phi``.  Must act pointwise in space.
    """
    config.check_program(program)
    if config.scheme == "picard":
        return integrate_picard(state, program, config, perturbation)
    n, dt, t0 = config.n_steps, config.step, state.time
    stepper = _Stepper(state, program, config, perturbation)
    times = t0 + dt * np.arange(2 * n + 1) / 2
    incs = None
    if program is not None and program.components:
        incs = program.increments(times)
    scale = max(hs_norm(state), 1.0)
    coeffs = state.coeffs.copy()
    snap_t, snaps = [t0], [coeffs.copy()]
    for j in range(n):
        t = t0 + j * dt
        i1 = i2 = None
        if incs is not None:
            i1, i2 = incs[2 * j], incs[2 * j + 1]
        coeffs = stepper.step(coeffs, t, dt, i1, i2)
        _guard(coeffs, state.s, scale, config.blowup_factor, t + dt)
        if (j + 1) % config.stride == 0 or j == n - 1:
            snap_t.append(t0 + (j + 1) * dt)
            snaps.append(coeffs.copy())
    return Trajectory(np.array(snap_t), np.array(snaps), state.dim, state.cutoff, state.s)


def _collocation_tableau(q: int):
    """Gauss-Legendre nodes ``c``, matrix ``A`` and weights ``b`` on ``[0, 1]``."""
    x, w = np.polynomial.legendre.leggauss(q)
    c, b = (x + 1) / 2, w / 2
    A = np.zeros((q, q))
    for m in range(q):
        others = np.delete(c, m)
        poly = np.poly1d(np.poly(others)) / np.prod(c[m] - others)
        integ = poly.integ()
        A[:, m] = integ(c) - integ(0.0)
    return c, A, b


def integrate_picard(state: SpectralState, program: ControlProgram | None,
                     config: IntegratorConfig, perturbation: Callable | None = None) -> Trajectory:
    """Duhamel fixed-point reference integrator.

    Works in the rotated frame ``a_k = exp(-i|k|^2 t) u_k`` where
    ``a' = i exp(-i|k|^2 t) (P[|u|^2 u + phi] + V_k)``.  Each step is a
    Gauss collocation solve; forcing enters through exact increments.
    """
    q = config.picard_nodes
    c, A, b = _collocation_tableau(q)
    n, dt, t0 = config.n_steps, config.step, state.time
    lam = wave_norm_sq(state.dim, state.cutoff)
    ng = padded_size(state.cutoff)
    has_src = program is not None and bool(program.components)

    def rhs(tau, a):
        u = np.exp(1j * lam * tau) * a
        g = to_grid(u, ng)
        nl = np.abs(g) ** 2 * g
        if perturbation is not None:
            nl = nl + perturbation(tau, g)
        return 1j * np.exp(-1j * lam * tau) * from_grid(nl, state.cutoff)

    scale = max(hs_norm(state), 1.0)
    a = state.coeffs * np.exp(-1j * lam * t0)
    snap_t, snaps = [t0], [state.coeffs.copy()]
    for j in range(n):
        t = t0 + j * dt
        taus = t + c * dt
        src = np.zeros((q,) + a.shape, complex)
        total_src = 0
        if has_src:
            inc = program.increments(np.concatenate(([t], taus, [t + dt])))
            cum = np.cumsum(inc, axis=0)
            for i in range(q):
                src[i] = 1j * program.scatter(cum[i], state.cutoff)
            total_src = 1j * program.scatter(cum[-1], state.cutoff)
        stages = np.array([a + src[i] for i in range(q)])
        for it in range(config.picard_max_iter):
            F = np.array([rhs(taus[i], stages[i]) for i in range(q)])
            new = a[None] + src + dt * np.tensordot(A, F, axes=(1, 0))
            delta = np.max(np.abs(new - stages))
            stages = new
            if delta <= config.picard_tol * max(1.0, np.max(np.abs(new))):
                break
            if not np.isfinite(delta) or (it > 5 and delta > 1e3):
                raise ContractionFailure(f"Picard iteration diverged at t={t:.4f}")
        else:
            raise ContractionFailure(f"Picard iteration did not converge at t={t:.4f}")
        F = np.array([rhs(taus[i], stages[i]) for i in range(q)])
        a = a + dt * np.tensordot(b, F, axes=(0, 0)) + total_src
        u = a * np.exp(1j * lam * (t + dt))
        _guard(u, state.s, scale, config.blowup_factor, t + dt)
        if (j + 1) % config.stride == 0 or j == n - 1:
            snap_t.append(t + dt)
            snaps.append(u.copy())
    return Trajectory(np.array(snap_t), np.array(snaps), state.dim, state.cutoff, state.s)
