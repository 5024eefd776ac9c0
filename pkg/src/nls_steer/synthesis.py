"""Fast-oscillating controls that realise forcing on a new mode ``2r - s``.

Two carriers, ``v_r = exp(i(t/eps + rho)) vr(t)`` on mode ``r`` and
``v_s = exp(2it/eps) vs(t)`` on mode ``s``, are driven through their time
derivatives.  Their cubic interaction has one slowly varying monomial on
``2r - s`` whose coefficient is ``vr^2 vs exp(2i(rho - |r-s|^2 t - U))``
where ``U(t) = int_0^t (vr^2 + vs^2)``.  The remaining forcing is multiplied
by ``exp(2iU)`` to compensate the phase drift the carriers induce.

Envelopes are piecewise polynomials, so ``U`` and its end value ``pi N`` are
exact up to rounding.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline, PPoly
from scipy.optimize import brentq

from .errors import SynthesisError
from .lattice import ExtensionChain, ExtensionStep, ModeSet, as_mode
from .program import Component, ControlProgram

FREEZE_THRESHOLD = 1e-8
UPSILON_FLAG = 10 * math.pi


def _ppoly(breaks, pieces) -> PPoly:
    """PPoly from per-interval local polynomials (highest degree first)."""
    deg = max(len(p) for p in pieces)
    c = np.zeros((deg, len(pieces)))
    for j, p in enumerate(pieces):
        c[deg - len(p):, j] = p
    return PPoly(c, np.asarray(breaks, dtype=float))


def _square(poly: PPoly) -> PPoly:
    pieces = [np.polymul(poly.c[:, j], poly.c[:, j]) for j in range(poly.c.shape[1])]
    return _ppoly(poly.x, pieces)


def _scale(poly: PPoly, factor: float) -> PPoly:
    return PPoly(poly.c * factor, poly.x)


def _local_pieces(poly: PPoly) -> list:
    return [poly.c[:, j] for j in range(poly.c.shape[1])]


class Envelope:
    """Real envelope on ``[0, T]`` known through its square (and possibly its value).

    It vanishes at both ends of the horizon; evaluation there returns an exact zero.
    """

    def __init__(self, square: PPoly, value: PPoly | None = None):
        self.square = square
        self.value = value
        self._energy = square.antiderivative()
        self._dsq = square.derivative()
        self._dval = value.derivative() if value is not None else None

    @property
    def horizon(self) -> float:
        return float(self.square.x[-1])

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.value is not None:
            out = self.value(t)
        else:
            out = np.sqrt(np.maximum(self.square(t), 0.0))
        return np.where((t <= self.square.x[0]) | (t >= self.horizon), 0.0, out)

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        if self._dval is not None:
            return self._dval(t)
        root = np.sqrt(np.maximum(self.square(t), 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(root > 0, self._dsq(t) / (2 * root), 0.0)
        return out

    def energy(self, t):
        """``int_0^t envelope^2``."""
        return self._energy(np.asarray(t, dtype=float))

    @property
    def total(self) -> float:
        return float(self._energy(self.horizon))

    def sup_square(self) -> float:
        grid = np.unique(np.concatenate([self.square.x, np.linspace(0, self.horizon, 2001)]))
        return float(np.max(self.square(grid)))


@dataclass
class TargetSignal:
    """Smoothed complex signal ``m(t) exp(i phi(t))`` on ``[start, stop]``.

    Outside the interval the signal is held at its end values.
    """

    modulus: PPoly
    phase: PPoly
    start: float
    stop: float

    def _clip(self, t):
        return np.clip(np.asarray(t, dtype=float), self.start, self.stop)

    def modulus_at(self, t):
        return self.modulus(self._clip(t))

    def phase_at(self, t):
        return self.phase(self._clip(t))

    def phase_rate(self, t):
        t = np.asarray(t, dtype=float)
        inside = (t >= self.start) & (t <= self.stop)
        return np.where(inside, self.phase.derivative()(self._clip(t)), 0.0)

    def __call__(self, t):
        return self.modulus_at(t) * np.exp(1j * self.phase_at(t))

    def sup_modulus(self) -> float:
        grid = np.linspace(self.start, self.stop, 4001)
        return float(np.max(np.abs(self.modulus(grid))))

    def times(self, factor: complex) -> "TargetSignal":
        """Signal multiplied by a complex constant."""
        factor = complex(factor)
        phase = PPoly(self.phase.c.copy(), self.phase.x)
        phase.c[-1] += np.angle(factor)
        return TargetSignal(_scale(self.modulus, abs(factor)), phase, self.start, self.stop)

    @classmethod
    def constant(cls, value: complex, start: float, stop: float) -> "TargetSignal":
        value = complex(value)
        brk = [start, stop]
        return cls(PPoly(np.array([[abs(value)]]), brk),
                   PPoly(np.array([[np.angle(value) if value != 0 else 0.0]]), brk),
                   start, stop)

    @classmethod
    def from_callable(cls, func, start: float, stop: float, n_nodes: int = 257,
                      freeze: float = FREEZE_THRESHOLD) -> "TargetSignal":
        """Cubic-spline fit of modulus and unwrapped phase of ``func`` samples.

        Where ``|w| < freeze * max|w|`` the phase keeps its previous value.
        """
        t = np.linspace(start, stop, max(n_nodes, 4))
        w = np.asarray(func(t), dtype=complex) * np.ones_like(t)
        if np.all(w == w[0]):
            return cls.constant(w[0], start, stop)
        return cls.from_samples(t, w, freeze)

    @classmethod
    def from_samples(cls, t, w, freeze: float = FREEZE_THRESHOLD) -> "TargetSignal":
        t = np.asarray(t, dtype=float)
        w = np.asarray(w, dtype=complex)
        mod = np.abs(w)
        scale = mod.max()
        live = mod >= freeze * scale if scale > 0 else np.zeros(mod.shape, bool)
        phase = np.zeros_like(mod)
        if live.any():
            raw = np.angle(w)
            first = int(np.argmax(live))
            last_val = raw[first]
            for j in range(t.size):
                if live[j]:
                    step = raw[j] - last_val
                    last_val = last_val + (step + np.pi) % (2 * np.pi) - np.pi
                phase[j] = last_val
        mspline = CubicSpline(t, mod, bc_type="not-a-knot")
        pspline = CubicSpline(t, phase, bc_type="not-a-knot")
        return cls(PPoly(mspline.c, mspline.x), PPoly(pspline.c, pspline.x),
                   float(t[0]), float(t[-1]))


def boot_length(eps: float) -> float:
    return eps * eps


def build_vr(horizon: float, eps: float, plateau: float | None = None) -> Envelope:
    """Envelope whose square ramps linearly over ``eps^2`` to a plateau.

    The default plateau ``pi / (T - eps^2)`` makes ``int vr^2 = pi``.
    """
    tau = boot_length(eps)
    if not tau < horizon / 2:
        raise ValueError(f"eps^2 = {tau} must be below T/2 = {horizon / 2}")
    c = math.pi / (horizon - tau) if plateau is None else float(plateau)
    sq = _ppoly([0.0, tau, horizon - tau, horizon],
                [[c / tau, 0.0], [c], [-c / tau, c]])
    return Envelope(sq)


def _hermite_left(p, dp, tau):
    """Local cubic on [0,1]: value/slope 0 at 0, ``p``/``tau*dp`` at 1."""
    return np.polyadd(p * np.array([-2.0, 3.0, 0.0, 0.0]), tau * dp * np.array([1.0, -1.0, 0.0, 0.0]))


def _hermite_right(p, dp, tau):
    """Local cubic on [0,1]: ``p``/``tau*dp`` at 0, value/slope 0 at 1."""
    return np.polyadd(p * np.array([2.0, -3.0, 0.0, 1.0]), tau * dp * np.array([1.0, -2.0, 1.0, 0.0]))


BUMP = np.array([1.0, -2.0, 1.0, 0.0, 0.0])  # x^2 (1 - x)^2


def _poly_energy(p, tau) -> float:
    """``tau * int_0^1 p(x)^2 dx``."""
    sq = np.polyint(np.polymul(p, p))
    return float(tau * np.polyval(sq, 1.0))


def _plateau_value_pieces(target: TargetSignal, scale: float):
    poly = target.modulus
    return list(poly.x), [c * scale for c in _local_pieces(poly)]


def _assemble_vs(target, tau, horizon, scale, beta):
    """Envelope for ``vs``: Hermite boots (plus bump ``beta``) around ``m * scale``."""
    xs, pieces = _plateau_value_pieces(target, scale)
    dm = target.modulus.derivative()
    pl, pr = target.modulus(tau) * scale, target.modulus(horizon - tau) * scale
    dl, dr = dm(tau) * scale, dm(horizon - tau) * scale
    left = np.polyadd(_hermite_left(pl, dl, tau), beta * BUMP)
    right = np.polyadd(_hermite_right(pr, dr, tau), beta * BUMP)
    # local polynomials in x = (t - t0)/tau -> rescale to t - t0
    to_time = lambda p: p / tau ** np.arange(len(p) - 1, -1, -1)
    value = _ppoly([0.0] + xs + [horizon], [to_time(left)] + pieces + [to_time(right)])
    return Envelope(_square(value), value), (pl, dl, pr, dr)


def _check_plateau(target: TargetSignal, tau: float, horizon: float):
    if abs(target.start - tau) > 1e-12 * max(1, horizon) or abs(target.stop - (horizon - tau)) > 1e-12 * max(1, horizon):
        raise ValueError("target must be fitted on the plateau [eps^2, T - eps^2]")


def build_vs(target: TargetSignal, vr: Envelope, horizon: float, eps: float):
    """Envelope for ``vs`` matching ``vr^2 vs = |w|`` on the plateau.

    Boot intervals carry a bump whose amplitude is chosen so that
    ``int vs^2 = pi N`` with ``N = floor(A / pi) + 1`` and ``A`` the plateau
    energy of ``vs``.

    Returns
    -------
    (Envelope, int)
    """
    tau = boot_length(eps)
    _check_plateau(target, tau, horizon)
    c = float(vr.square(horizon / 2))
    base, _ = _assemble_vs(target, tau, horizon, 1.0 / c, 0.0)
    plateau_energy = float(base.energy(horizon - tau) - base.energy(tau))
    n = int(math.floor(plateau_energy / math.pi)) + 1
    need = math.pi * n - plateau_energy
    # boot energy is a quadratic in beta; take the root on its increasing branch
    left = base.value.c[:, 0] * tau ** np.arange(base.value.c.shape[0] - 1, -1, -1)
    right = base.value.c[:, -1] * tau ** np.arange(base.value.c.shape[0] - 1, -1, -1)
    a0 = _poly_energy(left, tau) + _poly_energy(right, tau)
    lin = 2 * tau * float(np.polyval(np.polyint(np.polymul(np.polyadd(left, right), BUMP)), 1.0))
    quad = 2 * _poly_energy(BUMP, tau)
    disc = lin * lin - 4 * quad * (a0 - need)
    if disc < 0:
        raise SynthesisError("boot budget cannot absorb the target at this eps; decrease eps")
    beta = (-lin + math.sqrt(disc)) / (2 * quad)
    vs, _ = _assemble_vs(target, tau, horizon, 1.0 / c, beta)
    return vs, n


def build_balanced(target: TargetSignal, horizon: float, eps: float):
    """Jointly sized envelopes with bounded boots.

    ``vr^2`` keeps its linear ramps but its plateau ``c`` is free;
    ``vs = m / c`` with smooth Hermite boots.  ``c`` solves
    ``c (T - tau) + B / c^2 = pi N`` on the branch where the left side
    increases, for the smallest feasible integer ``N``.

    Returns
    -------
    (vr, vs, N)
    """
    tau = boot_length(eps)
    _check_plateau(target, tau, horizon)
    unit, _ = _assemble_vs(target, tau, horizon, 1.0, 0.0)
    budget = unit.total
    span = horizon - tau
    if budget <= 0:
        n, c = 1, math.pi / span
    else:
        c_min = (2 * budget / span) ** (1 / 3)
        f = lambda c: c * span + budget / c ** 2
        n = max(1, math.ceil(f(c_min) / math.pi - 1e-12))
        hi = math.pi * n / span
        if f(c_min) > math.pi * n:
            raise SynthesisError("no admissible plateau found")
        c = c_min if f(c_min) == math.pi * n else brentq(
            lambda x: f(x) - math.pi * n, c_min, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    vr = build_vr(horizon, eps, plateau=c)
    vs, _ = _assemble_vs(target, tau, horizon, 1.0 / c, 0.0)
    return vr, vs, n


def _ppoly_sum(a: PPoly, b: PPoly) -> PPoly:
    """Sum on the merged breakpoints; local coefficients from right-sided derivatives."""
    xs = np.unique(np.concatenate([a.x, b.x]))
    order = max(a.c.shape[0], b.c.shape[0])
    lo = xs[:-1]
    rows = [(a(lo, nu) + b(lo, nu)) / math.factorial(nu) for nu in range(order)]
    return PPoly(np.array(rows[::-1]), xs)


def build_upsilon(vr: Envelope, vs: Envelope):
    """``U(t) = int_0^t (vr^2 + vs^2)`` and its rate, as exact piecewise polynomials."""
    rate = _ppoly_sum(vr.square, vs.square)
    return rate.antiderivative(), rate


def build_rho(target: TargetSignal, upsilon, r, s, upsilon_rate=None):
    """Carrier phase ``rho = Arg(w)/2 + |r-s|^2 t + U(t)``.

    Returns ``(rho, rho_rate)`` callables.
    """
    r, s = as_mode(r), as_mode(s)
    gap = float(sum((a - b) ** 2 for a, b in zip(r, s)))

    def rho(t):
        t = np.asarray(t, dtype=float)
        return 0.5 * target.phase_at(t) + gap * t + upsilon(t)

    def rho_rate(t):
        t = np.asarray(t, dtype=float)
        u_rate = upsilon_rate(t) if upsilon_rate is not None else 0.0
        return 0.5 * target.phase_rate(t) + gap + u_rate

    return rho, rho_rate


@dataclass
class OscillatorBundle:
    """Carriers for one elementary move ``(r, s) -> 2r - s``.

    ``target`` is the coefficient the cubic monomial must reproduce, i.e.
    the requested forcing times ``-i``.
    """

    r: tuple
    s: tuple
    epsilon: float
    horizon: float
    vr: Envelope
    vs: Envelope
    target: TargetSignal
    N: int
    profile: str
    upsilon: PPoly = field(init=False)
    upsilon_rate: PPoly = field(init=False)
    vs_share: int | None = None

    def __post_init__(self):
        self.r, self.s = as_mode(self.r), as_mode(self.s)
        self.upsilon, self.upsilon_rate = build_upsilon(self.vr, self.vs)
        self.rho, self.rho_rate = build_rho(self.target, self.upsilon, self.r, self.s,
                                            self.upsilon_rate)

    @property
    def new(self) -> tuple:
        return tuple(2 * a - b for a, b in zip(self.r, self.s))

    @property
    def gap(self) -> float:
        return float(sum((a - b) ** 2 for a, b in zip(self.r, self.s)))

    @property
    def upsilon_end(self) -> float:
        return float(self.upsilon(self.horizon))

    def v_r(self, t):
        t = np.asarray(t, dtype=float)
        return np.exp(1j * (t / self.epsilon + self.rho(t))) * self.vr(t)

    def v_s(self, t):
        t = np.asarray(t, dtype=float)
        return np.exp(2j * t / self.epsilon) * self.vs(t)

    def dv_r(self, t):
        t = np.asarray(t, dtype=float)
        theta_rate = 1.0 / self.epsilon + self.rho_rate(t)
        return np.exp(1j * (t / self.epsilon + self.rho(t))) * (
            self.vr.derivative(t) + 1j * theta_rate * self.vr(t))

    def dv_s(self, t):
        t = np.asarray(t, dtype=float)
        return np.exp(2j * t / self.epsilon) * (
            self.vs.derivative(t) + 2j / self.epsilon * self.vs(t))

    def resonant_product(self, t):
        """``vr^2 vs exp(2i(rho - |r-s|^2 t - U))``."""
        t = np.asarray(t, dtype=float)
        return self.vr.square(t) * self.vs(t) * np.exp(
            2j * (self.rho(t) - self.gap * t - self.upsilon(t)))

    def resonant_forcing(self, t):
        """Forcing on ``2r - s`` seen by the compensated state (``i`` times the product)."""
        return 1j * self.resonant_product(t)

    def residual(self, n_per_boot: int = 400) -> float:
        """``int_0^T |vr^2 vs - |w||`` (the plateau contributes only rounding)."""
        tau = boot_length(self.epsilon)
        T = self.horizon
        x, w = np.polynomial.legendre.leggauss(n_per_boot)
        total = 0.0
        for lo, hi in ((0.0, tau), (T - tau, T)):
            t = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
            d = self.vr.square(t) * self.vs(t) - self.target.modulus_at(t)
            total += 0.5 * (hi - lo) * float(np.abs(d) @ w)
        t = 0.5 * (T - 2 * tau) * x + 0.5 * T
        d = self.vr.square(t) * self.vs(t) - self.target.modulus_at(t)
        total += 0.5 * (T - 2 * tau) * float(np.abs(d) @ w)
        return total

    def residual_bound(self) -> float:
        """A-priori bound ``sup vr^2 * eps * sqrt(2 pi N) + 2 sup|w| eps^2``."""
        eps = self.epsilon
        return (self.vr.sup_square() * eps * math.sqrt(2 * math.pi * self.N)
                + 2 * self.target.sup_modulus() * eps * eps)

    def diagnostics(self) -> list:
        notes = []
        if self.upsilon_end > UPSILON_FLAG:
            notes.append(f"U(T) = {self.upsilon_end:.4g} exceeds 10 pi; carriers are large")
        return notes

    def describe(self) -> dict:
        T = self.horizon
        return {
            "r": list(self.r), "s": list(self.s), "new": list(self.new),
            "epsilon": self.epsilon, "profile": self.profile, "N": self.N,
            "upsilon_end": self.upsilon_end,
            "vr_plateau": float(self.vr(T / 2)), "vs_midpoint": float(self.vs(T / 2)),
            "carrier_frequencies": [1.0 / self.epsilon, 2.0 / self.epsilon],
            "residual": self.residual(), "residual_bound": self.residual_bound(),
            "diagnostics": self.diagnostics(),
        }


def target_for(program: ControlProgram, mode, horizon: float, eps: float,
               n_nodes: int | None = None) -> TargetSignal:
    """Smoothed coefficient of ``program`` on ``mode`` over the plateau."""
    tau = boot_length(eps)
    if n_nodes is None:
        n_nodes = 257
        if program.min_epsilon is not None:
            n_nodes = max(n_nodes, int(math.ceil(16 * horizon / (math.pi * program.min_epsilon))) + 1)
    return TargetSignal.from_callable(program.mode_rate(mode), tau, horizon - tau, n_nodes)


def make_bundle(w_family: ControlProgram, r, s, eps: float, profile: str = "balanced",
                n_nodes: int | None = None) -> OscillatorBundle:
    """Bundle reproducing the ``2r - s`` coefficient of ``w_family``."""
    r, s = as_mode(r), as_mode(s)
    new = tuple(2 * a - b for a, b in zip(r, s))
    T = w_family.horizon
    wanted = target_for(w_family, new, T, eps, n_nodes)
    effective = wanted.times(-1j)
    if profile == "balanced":
        vr, vs, n = build_balanced(effective, T, eps)
        return OscillatorBundle(r, s, eps, T, vr, vs, effective, n, profile)
    if profile == "boot":
        vr = build_vr(T, eps)
        vs, share = build_vs(effective, vr, T, eps)
        return OscillatorBundle(r, s, eps, T, vr, vs, effective, share + 1, profile,
                                vs_share=share)
    raise ValueError(f"unknown profile {profile!r}")


@dataclass
class SynthesisResult:
    """Program on the smaller set together with its carrier bundles."""

    program: ControlProgram
    residual: float
    bundles: list

    def frequency_table(self) -> list:
        return [{"r": list(b.r), "s": list(b.s), "new": list(b.new), "epsilon": b.epsilon,
                 "frequencies": [1.0 / b.epsilon, 2.0 / b.epsilon]} for b in self.bundles]

    def describe(self) -> dict:
        return {"residual": self.residual, "bundles": [b.describe() for b in self.bundles],
                "modes": [list(k) for k in self.program.modes]}


def assemble_program(bundle: OscillatorBundle, w_family: ControlProgram,
                     reduced: ModeSet) -> SynthesisResult:
    """Replace the forcing on ``2r - s`` by carriers on ``r`` and ``s``.

    Every other component of ``w_family`` is multiplied by ``exp(2i U)``.
    """
    new = bundle.new
    if bundle.r not in reduced or bundle.s not in reduced:
        raise ValueError("r and s must belong to the reduced set")
    extended = reduced.union([new])
    for c in w_family.components:
        if c.mode not in extended.members:
            raise ValueError(f"forcing on {c.mode} is outside the extended set")
    phase = lambda t: 2 * bundle.upsilon(np.asarray(t, dtype=float))
    phase_rate = lambda t: 2 * bundle.upsilon_rate(np.asarray(t, dtype=float))
    comps = [c.modulated(phase, phase_rate) for c in w_family.components if c.mode != new]
    comps.append(Component(bundle.r, primitive=bundle.v_r, full=bundle.dv_r,
                           breaks=tuple(bundle.vr.square.x), tag="carrier"))
    comps.append(Component(bundle.s, primitive=bundle.v_s, full=bundle.dv_s,
                           breaks=tuple(bundle.vs.square.x), tag="carrier"))
    eps = bundle.epsilon if w_family.min_epsilon is None else min(bundle.epsilon, w_family.min_epsilon)
    meta = dict(w_family.metadata)
    program = ControlProgram(w_family.dim, comps, w_family.horizon, eps, meta)
    return SynthesisResult(program, bundle.residual(), [bundle])


def step_epsilons(n_steps: int, eps: float, ratio: float = 3.5) -> list:
    """Per-step carrier parameters: the last move uses ``eps``, earlier ones are faster."""
    return [eps / ratio ** (n_steps - 1 - j) for j in range(n_steps)]


def synthesize_chain(chain: ExtensionChain, w_family: ControlProgram, eps: float,
                     ratio: float = 3.5, profile: str = "balanced") -> SynthesisResult:
    """Fold :func:`assemble_program` over the chain, last move first."""
    sets = chain.replay()
    for c in w_family.components:
        if c.mode not in sets[-1].members:
            raise ValueError(f"forcing on {c.mode} is outside the chain's final set")
    program, bundles, residual = w_family, [], 0.0
    eps_list = step_epsilons(len(chain), eps, ratio)
    for j in reversed(range(len(chain))):
        step: ExtensionStep = chain.steps[j]
        bundle = make_bundle(program, step.r, step.s, eps_list[j], profile)
        res = assemble_program(bundle, program, sets[j])
        program = res.program
        bundles.insert(0, bundle)
        residual += res.residual
    return SynthesisResult(program, residual, bundles)
