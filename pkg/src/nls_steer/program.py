"""Time-dependent forcing supported on finitely many Fourier modes.

A forcing is written in the rotated basis ``f_k = exp(i(k.x + |k|^2 t))``.
Each :class:`Component` carries an exact primitive where one is known and a
smooth remainder rate that is integrated by Gauss-Legendre quadrature, so
increments over a time step stay accurate even for fast carriers.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .lattice import as_mode
from .state import mode_index

GAUSS_NODES, GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(4)


def _zero(t):
    return np.zeros_like(np.asarray(t, dtype=float), dtype=complex)


@dataclass(frozen=True)
class Component:
    """Forcing coefficient ``c(t)`` on one mode, in the rotated basis.

    ``c = primitive' + rate``.  ``full`` evaluates ``c`` directly and is used
    for sampling; it defaults to ``rate`` when there is no primitive.
    """

    mode: tuple
    rate: Callable | None = None
    primitive: Callable | None = None
    full: Callable | None = None
    breaks: tuple = ()
    tag: str = "direct"

    def __post_init__(self):
        object.__setattr__(self, "mode", as_mode(self.mode))
        if self.rate is None and self.primitive is None:
            raise ValueError("a component needs a rate or a primitive")
        if self.full is None:
            if self.primitive is not None:
                raise ValueError("components with a primitive must supply 'full'")
            object.__setattr__(self, "full", self.rate)

    def modulated(self, phase: Callable, phase_rate: Callable) -> "Component":
        """Multiply by ``g(t) = exp(i phase(t))``; ``phase_rate`` is ``phase'``."""
        g = lambda t: np.exp(1j * phase(t))
        dg = lambda t: 1j * phase_rate(t) * g(t)
        prim, rate, full = self.primitive, self.rate, self.full
        new_full = lambda t: full(t) * g(t)
        if prim is None:
            return Component(self.mode, rate=lambda t: rate(t) * g(t), full=new_full,
                             breaks=self.breaks, tag=self.tag)
        base_rate = rate if rate is not None else _zero
        return Component(self.mode,
                         rate=lambda t: base_rate(t) * g(t) - prim(t) * dg(t),
                         primitive=lambda t: prim(t) * g(t),
                         full=new_full, breaks=self.breaks, tag=self.tag)


def constant_rate(mode, value: complex, start: float, stop: float, tag="direct") -> Component:
    """Rotated-basis coefficient equal to ``value`` on ``[start, stop]``."""
    value = complex(value)

    def prim(t):
        t = np.asarray(t, dtype=float)
        return value * (np.clip(t, start, stop) - start)

    def full(t):
        t = np.asarray(t, dtype=float)
        return np.where((t >= start) & (t <= stop), value, 0j)

    return Component(mode, primitive=prim, full=full, tag=tag)


def exponential_window(mode, amplitude: complex, start: float, stop: float,
                       tag="direct") -> Component:
    """Exponential-basis coefficient ``amplitude`` on ``[start, stop]``.

    In the rotated basis this is ``amplitude * exp(-i|k|^2 t)``; its primitive
    is written in closed form.
    """
    mode = as_mode(mode)
    lam = float(sum(v * v for v in mode))
    amplitude = complex(amplitude)

    def antider(t):
        if lam == 0:
            return amplitude * t
        return amplitude * (np.exp(-1j * lam * t) - 1.0) / (-1j * lam)

    def prim(t):
        t = np.clip(np.asarray(t, dtype=float), start, stop)
        return antider(t) - antider(start)

    def full(t):
        t = np.asarray(t, dtype=float)
        inside = (t >= start) & (t <= stop)
        return np.where(inside, amplitude * np.exp(-1j * lam * t), 0j)

    return Component(mode, primitive=prim, full=full, tag=tag)


def smooth_rate(mode, func: Callable, basis: str = "rotated", breaks=(), tag="direct"):
    """Component from a smooth callable coefficient."""
    mode = as_mode(mode)
    if basis == "rotated":
        return Component(mode, rate=func, breaks=tuple(breaks), tag=tag)
    if basis != "exponential":
        raise ValueError("basis must be 'rotated' or 'exponential'")
    lam = float(sum(v * v for v in mode))
    rot = lambda t: func(t) * np.exp(-1j * lam * np.asarray(t, dtype=float))
    return Component(mode, rate=rot, breaks=tuple(breaks), tag=tag)


def sampled_rate(mode, times: Sequence, values: Sequence, basis="rotated", tag="sampled"):
    """Piecewise-linear interpolation of uniformly sampled coefficients."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=complex)
    interp = lambda t: (np.interp(t, times, values.real) + 1j * np.interp(t, times, values.imag))
    return smooth_rate(mode, interp, basis, breaks=tuple(times), tag=tag)


@dataclass
class ControlProgram:
    """Sum of components on a horizon ``[0, horizon]``.

    Attributes
    ----------
    min_epsilon : float or None
        Smallest carrier period parameter present; drives the step-size rule.
    """

    dim: int
    components: list
    horizon: float
    min_epsilon: float | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        for c in self.components:
            if len(c.mode) != self.dim:
                raise ValueError(f"component mode {c.mode} has wrong dimension")

    @property
    def modes(self) -> list:
        return sorted({c.mode for c in self.components})

    def _slot(self) -> dict:
        return {k: i for i, k in enumerate(self.modes)}

    def increments(self, times: np.ndarray) -> np.ndarray:
        """``int_{t_j}^{t_{j+1}} c_k`` for consecutive times; shape ``(len-1, n_modes)``."""
        times = np.asarray(times, dtype=float)
        slot = self._slot()
        out = np.zeros((times.size - 1, len(slot)), dtype=complex)
        a, b = times[:-1], times[1:]
        half, mid = 0.5 * (b - a), 0.5 * (b + a)
        nodes = mid[:, None] + half[:, None] * GAUSS_NODES[None, :]
        for c in self.components:
            col = slot[c.mode]
            if c.primitive is not None:
                p = c.primitive(times)
                out[:, col] += p[1:] - p[:-1]
            if c.rate is not None:
                vals = c.rate(nodes)
                out[:, col] += half * (vals @ GAUSS_WEIGHTS)
                for br in c.breaks:
                    j = np.searchsorted(times, br, side="right") - 1
                    if 0 <= j < a.size and a[j] < br < b[j]:
                        out[j, col] += (_gauss(c.rate, a[j], br) + _gauss(c.rate, br, b[j])
                                        - half[j] * (vals[j] @ GAUSS_WEIGHTS))
        return out

    def increment(self, t0: float, t1: float) -> np.ndarray:
        return self.increments(np.array([t0, t1]))[0]

    def rate(self, t) -> np.ndarray:
        """Full coefficients at times ``t``; shape ``(len(t), n_modes)``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        slot = self._slot()
        out = np.zeros((t.size, len(slot)), dtype=complex)
        for c in self.components:
            out[:, slot[c.mode]] += c.full(t)
        return out

    def mode_rate(self, mode) -> Callable:
        """Callable full coefficient on one mode (zero if absent)."""
        mode = as_mode(mode)
        comps = [c for c in self.components if c.mode == mode]

        def f(t):
            t = np.asarray(t, dtype=float)
            total = np.zeros(t.shape, dtype=complex)
            for c in comps:
                total = total + c.full(t)
            return total

        return f

    def cell_averages(self, n_cells: int):
        """Cell-centre times and cell-averaged coefficients on a uniform grid."""
        edges = np.linspace(0.0, self.horizon, n_cells + 1)
        inc = self.increments(edges)
        width = np.diff(edges)[:, None]
        return 0.5 * (edges[1:] + edges[:-1]), inc / width

    def scatter(self, vector: np.ndarray, cutoff: int) -> np.ndarray:
        """Place a per-mode vector into a box array of the given cutoff."""
        out = np.zeros((2 * cutoff + 1,) * self.dim, dtype=complex)
        for k, v in zip(self.modes, vector):
            out[mode_index(k, cutoff)] += v
        return out

    def l1_norm(self, n: int = 4096) -> float:
        """``int_0^T sum_k |c_k(t)| dt`` on a cell-average grid."""
        _, avg = self.cell_averages(n)
        return float(np.sum(np.abs(avg)) * self.horizon / n)


def _gauss(f, a, b):
    half, mid = 0.5 * (b - a), 0.5 * (b + a)
    return half * (f(mid + half * GAUSS_NODES) @ GAUSS_WEIGHTS)


def empty_program(dim: int, horizon: float) -> ControlProgram:
    return ControlProgram(dim, [], horizon)
