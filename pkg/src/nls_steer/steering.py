"""End-point steering experiments built on the integrator and the synthesis.

Targets are given as ``{mode: coefficient}`` maps in the exponential basis at
the final time, or as :class:`SpectralState` objects.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import FrameConditioningError, NoChainFound
from .integrator import IntegratorConfig, integrate
from .lattice import ExtensionChain, ModeSet, as_mode, plan_extension_chain
from .program import ControlProgram, constant_rate, exponential_window
from .state import Projection, SpectralState, hs_norm, mode_index, wave_norm_sq
from .synthesis import synthesize_chain


def _as_target(target, modes: ModeSet) -> dict:
    if isinstance(target, SpectralState):
        return {k: target[k] for k in modes.sorted() if max(abs(v) for v in k) <= target.cutoff}
    out = {as_mode(k): complex(v) for k, v in dict(target).items()}
    extra = set(out) - modes.members
    if extra:
        raise ValueError(f"target has modes {sorted(extra)} outside the observed set")
    return out


def _coeffs_on(state: SpectralState, modes) -> dict:
    return {k: state[k] for k in modes}


def _restricted_error(state: SpectralState, target: dict, modes: ModeSet, s: float) -> float:
    diff = SpectralState.zeros(state.dim, state.cutoff, state.s)
    for k in modes.sorted():
        diff.coeffs[mode_index(k, state.cutoff)] = state[k] - target.get(k, 0.0)
    return hs_norm(diff, s)


def _leakage(state: SpectralState, modes: ModeSet, s: float, reference=None) -> float:
    """``||(I - P) (u - reference)||_{H^s}`` for the coordinate projection ``P``."""
    rest = state if reference is None else state - reference
    inside = Projection(modes=modes)(rest)
    return hs_norm(rest - inside, s)


def target_grid(modes: ModeSet, radius: float, count: int, seed: int = 0, s: float = 0.0,
                interior: int = 0) -> list:
    """Deterministic targets on the H^s sphere of ``radius`` plus optional interior points."""
    rng = np.random.default_rng(seed)
    keys = modes.sorted()
    w = np.array([(1 + sum(v * v for v in k)) ** (s / 2) for k in keys])
    out = []
    for j in range(count + interior):
        z = rng.normal(size=len(keys)) + 1j * rng.normal(size=len(keys))
        z = z / np.linalg.norm(w * z) * radius
        if j >= count:
            z = z * rng.uniform(0.2, 0.9)
        out.append({k: complex(v) for k, v in zip(keys, z)})
    return out


def free_state(initial: SpectralState, duration: float, dt: float = 1e-2) -> SpectralState:
    """Zero-control evolution of ``initial`` over ``duration``."""
    if duration <= 0 or not np.any(initial.coeffs):
        return initial.copy(time=initial.time + max(duration, 0.0))
    cfg = IntegratorConfig(dt=min(dt, duration), horizon=duration)
    return integrate(initial, None, cfg).final


def full_dim_control(targets, modes: ModeSet, horizon: float, window: float,
                     initial: SpectralState | None = None) -> list:
    """Coast-then-kick programs, one per target.

    The control is zero on ``[0, T - window]`` and equals
    ``-i b_k / window`` in the exponential basis on the last ``window``;
    ``b`` is the target minus the coasted state on ``modes``.
    """
    if not 0 < window <= horizon:
        raise ValueError("window must lie in (0, T]")
    programs = []
    coast = None
    if initial is not None and np.any(initial.coeffs):
        coast = free_state(initial, horizon - window)
    for target in targets:
        tgt = _as_target(target, modes)
        comps = []
        for k in modes.sorted():
            b = tgt.get(k, 0.0) - (coast[k] if coast is not None else 0.0)
            if b != 0:
                comps.append(exponential_window(k, -1j * b / window, horizon - window, horizon))
        programs.append(ControlProgram(modes.dim, comps, horizon,
                                       metadata={"family": "kick", "window": window}))
    return programs


def spread_family(changes: dict, horizon: float, dim: int) -> ControlProgram:
    """Constant rotated-basis forcing that shifts rotated coefficients by ``changes``
    at linear order."""
    comps = [constant_rate(k, -1j * b / horizon, 0.0, horizon) for k, b in changes.items() if b != 0]
    return ControlProgram(dim, comps, horizon, metadata={"family": "spread"})


def refine_spread(initial: SpectralState, target: dict, modes: ModeSet, horizon: float,
                  dt: float = 1e-2, iterations: int = 12, tol: float = 1e-11):
    """Fixed-point correction of the spread family until ``P E_T(W) = target``.

    Returns ``(program, final_state, residual)``.
    """
    lam = {k: float(sum(v * v for v in k)) for k in modes.sorted()}
    t0 = initial.time
    a0 = {k: initial[k] * np.exp(-1j * lam[k] * t0) if max(abs(v) for v in k) <= initial.cutoff
          else 0j for k in modes.sorted()}
    goal = {k: target.get(k, 0.0) * np.exp(-1j * lam[k] * (t0 + horizon)) for k in modes.sorted()}
    changes = {k: goal[k] - a0[k] for k in modes.sorted()}
    cfg = IntegratorConfig(dt=dt, horizon=horizon)
    residual = math.inf
    for _ in range(iterations):
        prog = spread_family(changes, horizon, initial.dim)
        final = integrate(initial, prog, cfg).final
        got = {k: final[k] * np.exp(-1j * lam[k] * final.time) for k in modes.sorted()}
        miss = {k: goal[k] - got[k] for k in modes.sorted()}
        residual = max(abs(v) for v in miss.values())
        if residual < tol:
            break
        changes = {k: changes[k] + miss[k] for k in modes.sorted()}
    prog = spread_family(changes, horizon, initial.dim)
    final = integrate(initial, prog, cfg).final
    return prog, final, residual


@dataclass
class SteeringTask:
    """Initial state, targets on an observed subspace and a horizon."""

    initial: SpectralState
    targets: list
    subspace: Projection
    horizon: float = 1.0
    tolerance: float = 1e-2

    def __post_init__(self):
        if self.subspace.modes is not None:
            box = ModeSet.box(self.initial.dim, self.initial.cutoff)
            if not self.subspace.modes.members <= box.members:
                raise ValueError("observed modes exceed the cutoff box")


@dataclass
class CoverageReport:
    """Per-target end-point errors along an eps ladder."""

    eps: list
    errors: np.ndarray
    targets: list
    tolerance: float
    chain: list = field(default_factory=list)
    leakage: np.ndarray | None = None
    leakage_bound: float | None = None
    budget: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    finals: list | None = field(default=None, repr=False)

    @property
    def sup_errors(self) -> np.ndarray:
        return np.max(self.errors, axis=0)

    @property
    def passed(self) -> np.ndarray:
        return self.errors <= self.tolerance

    @property
    def monotone(self) -> bool:
        """Every target's error shrinks along the ladder."""
        return bool(np.all(np.diff(self.errors, axis=1) < 0))

    @property
    def sup_monotone(self) -> bool:
        return bool(np.all(np.diff(self.sup_errors) < 0))

    @property
    def flagged(self) -> bool:
        return not self.monotone

    def to_dict(self) -> dict:
        out = {
            "eps": list(map(float, self.eps)),
            "errors": np.asarray(self.errors).tolist(),
            "sup_errors": self.sup_errors.tolist(),
            "tolerance": self.tolerance,
            "passed": self.passed.tolist(),
            "monotone": self.monotone,
            "chain": self.chain,
            "targets": [[[list(k), [complex(v).real, complex(v).imag]] for k, v in t.items()]
                        for t in self.targets],
            "budget": self.budget,
            "notes": self.notes,
        }
        if self.leakage is not None:
            out["leakage"] = np.asarray(self.leakage).tolist()
            out["leakage_bound"] = self.leakage_bound
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["target", "eps", "error"])
        for i in range(self.errors.shape[0]):
            for j, e in enumerate(self.eps):
                w.writerow([i, repr(float(e)), repr(float(self.errors[i, j]))])
        return buf.getvalue()


def _dt_for(program: ControlProgram, base_dt: float) -> IntegratorConfig:
    return IntegratorConfig.for_program(program, dt=base_dt)


def kick_study(initial: SpectralState, targets, modes: ModeSet, horizon: float, windows,
               leakage_bound: float = 1e-3, s: float | None = None,
               tolerance: float = 1e-2) -> CoverageReport:
    """Coast-then-kick runs along a ladder of shrinking kick windows."""
    s = initial.s if s is None else s
    targets = [_as_target(t, modes) for t in targets]
    errors = np.zeros((len(targets), len(windows)))
    leak = np.zeros_like(errors)
    reference = free_state(initial, horizon) if np.any(initial.coeffs) else None
    finals = [[None] * len(windows) for _ in targets]
    for j, window in enumerate(windows):
        progs = full_dim_control(targets, modes, horizon, window, initial)
        for i, (tgt, prog) in enumerate(zip(targets, progs)):
            cfg = IntegratorConfig(dt=min(1e-2, window / 16), horizon=horizon)
            final = integrate(initial, prog, cfg).final
            finals[i][j] = final
            errors[i, j] = _restricted_error(final, tgt, modes, s)
            leak[i, j] = _leakage(final, modes, s, reference)
    rep = CoverageReport(list(windows), errors, targets, tolerance, [], leak, leakage_bound)
    rep.finals = finals
    if rep.flagged:
        rep.notes.append("error did not decrease monotonically for every target")
    return rep


def steer_component(task: SteeringTask, base: ModeSet, eps_ladder, ratio: float = 3.5,
                    profile: str = "balanced", window: int | None = None,
                    chain: ExtensionChain | None = None) -> CoverageReport:
    """Steer the observed coordinates through controls on ``base`` only.

    With ``base`` equal to the observed set this is the coast-then-kick
    family with kick window ``eps``.  Otherwise the spread family on the
    observed set is corrected to hit each target and then replaced by
    synthesized carriers on ``base`` for every ``eps``.
    """
    observed = task.subspace.modes
    if observed is None:
        raise ValueError("steer_component needs a coordinate subspace")
    if observed.dim != base.dim:
        raise ValueError("base and observed sets differ in dimension")
    s = task.initial.s
    if observed.members <= base.members:
        return kick_study(task.initial, task.targets, observed, task.horizon, eps_ladder,
                          s=s, tolerance=task.tolerance)
    if chain is None:
        radius = max(max(abs(v) for v in k) for k in observed.members)
        chain = plan_extension_chain(base, observed.members - base.members,
                                     max(1, radius) if window is None else window)
    elif not observed.members <= chain.final.members:
        raise ValueError("the chain does not reach every observed mode")
    chain.replay()
    targets = [_as_target(t, observed) for t in task.targets]
    errors = np.zeros((len(targets), len(eps_ladder)))
    finals = [[None] * len(eps_ladder) for _ in targets]
    covering = []
    for i, tgt in enumerate(targets):
        family, _, resid = refine_spread(task.initial, tgt, observed, task.horizon)
        covering.append(resid)
        for j, eps in enumerate(eps_ladder):
            res = synthesize_chain(chain, family, eps, ratio, profile)
            final = integrate(task.initial, res.program, _dt_for(res.program, 1e-2)).final
            finals[i][j] = final
            errors[i, j] = _restricted_error(final, tgt, observed, s)
    rep = CoverageReport(list(eps_ladder), errors, targets, task.tolerance, chain.to_list())
    rep.finals = finals
    rep.budget = {"covering_residual": float(max(covering))}
    if rep.flagged:
        rep.notes.append("error did not decrease monotonically for every target")
    return rep


def _tail_norm(state: SpectralState, n: int, s: float) -> float:
    box = ModeSet.box(state.dim, n)
    return _leakage(state, box, s)


def steer_approx(initial: SpectralState, target: SpectralState, base: ModeSet, budget: float,
                 eps_ladder, horizon: float = 1.0, cutoff_n: int | None = None,
                 ratio: float = 3.5, profile: str = "balanced",
                 drop: float = 1e-9) -> CoverageReport:
    """Steer the full state near ``target``.

    Chooses the smallest box ``|k|_inf <= N`` whose complement carries at
    most ``budget/4`` of both states, corrects a spread family on the modes
    it must move, then synthesizes it from ``base``.  The report's
    ``budget`` entry splits the error into tail, covering, leakage and
    approximation terms.
    """
    s = initial.s
    if cutoff_n is None:
        cutoff_n = next((n for n in range(initial.cutoff + 1)
                         if _tail_norm(target, n, s) <= budget / 4
                         and _tail_norm(initial, n, s) <= budget / 4), None)
        if cutoff_n is None:
            raise ValueError("target tail exceeds budget/4 inside the cutoff")
    tail = _tail_norm(target, cutoff_n, s)
    if tail > budget / 4:
        raise ValueError(f"tail {tail:.3e} exceeds budget/4")
    box = ModeSet.box(initial.dim, cutoff_n)
    lam = wave_norm_sq(initial.dim, initial.cutoff)
    drift = target.coeffs * np.exp(-1j * lam * horizon) - initial.coeffs
    moved = [k for k in box.sorted() if abs(drift[mode_index(k, initial.cutoff)]) > drop]
    support = ModeSet(initial.dim, frozenset(moved) | base.members)
    tgt = {k: target[k] for k in support.sorted()}
    family, final_w, resid = refine_spread(initial, tgt, support, horizon)
    covering = hs_norm(Projection(modes=box)(final_w) - Projection(modes=box)(target), s)
    leakage = _tail_norm(final_w, cutoff_n, s)
    new = support.members - base.members
    chain = (plan_extension_chain(base, new, max(1, cutoff_n)) if new
             else ExtensionChain(base, ()))
    errors = np.zeros((1, len(eps_ladder)))
    approx = []
    for j, eps in enumerate(eps_ladder):
        res = synthesize_chain(chain, family, eps, ratio, profile)
        final = integrate(initial, res.program, _dt_for(res.program, 1e-2)).final
        errors[0, j] = hs_norm(final - target, s)
        approx.append(hs_norm(final - final_w, s))
    rep = CoverageReport(list(eps_ladder), errors, [tgt], budget, chain.to_list())
    rep.budget = {"cutoff_N": cutoff_n, "tail": tail, "covering": covering,
                  "leakage": leakage, "approximation": approx,
                  "shares": {"tail": budget / 4, "covering": budget / 4,
                             "leakage": budget / 4, "approximation": budget / 4}}
    return rep


def truncate_frame(frame, tol: float):
    """Drop frame coefficients below ``tol * max``; returns truncated states and support."""
    out, support = [], set()
    for f in frame:
        mask = np.abs(f.coeffs) > tol * np.max(np.abs(f.coeffs))
        out.append(f.copy(coeffs=np.where(mask, f.coeffs, 0)))
        m = f.cutoff
        for idx in zip(*np.nonzero(mask)):
            support.add(tuple(int(i) - m for i in idx))
    return out, ModeSet(frame[0].dim, frozenset(support))


def steer_projection(initial: SpectralState, frame, coordinates, base: ModeSet, eps_ladder,
                     horizon: float = 1.0, truncation: float = 1e-6, max_condition: float = 1e2,
                     tolerance: float = 1e-2, **kw) -> CoverageReport:
    """Steer the projection onto ``span(frame)`` to the given frame coordinates.

    Frame vectors are truncated to a finite coordinate set ``L^C``; the
    target is lifted through the truncated frame's Gram matrix and steered
    in the ``L^C`` coordinates.  Errors are reported on the frame
    coordinates.
    """
    Projection(frame=list(frame))  # rejects dependent frames
    trunc, support = truncate_frame(frame, truncation)
    F = np.array([f.coeffs.ravel() for f in frame])
    Ft = np.array([f.coeffs.ravel() for f in trunc])
    gram = np.conj(F) @ Ft.T
    if np.linalg.cond(gram) > max_condition or np.linalg.norm(gram - np.eye(len(frame))) > 0.5:
        raise FrameConditioningError("truncated frame is not close to orthonormal")
    lifted_targets = []
    for c in coordinates:
        y = np.linalg.solve(gram, np.asarray(c, dtype=complex))
        vec = (y @ Ft).reshape(initial.coeffs.shape)
        st = initial.copy(coeffs=vec)
        lifted_targets.append({k: st[k] for k in support.sorted()})
    task = SteeringTask(initial, lifted_targets, Projection(modes=support), horizon, tolerance)
    sub = steer_component(task, base, eps_ladder, **kw)
    errors = np.zeros_like(sub.errors)
    for i, c in enumerate(coordinates):
        for j in range(len(eps_ladder)):
            got = np.conj(F) @ sub.finals[i][j].coeffs.ravel()
            errors[i, j] = float(np.linalg.norm(got - np.asarray(c, dtype=complex)))
    rep = CoverageReport(sub.eps, errors, lifted_targets, tolerance, sub.chain)
    rep.finals = sub.finals
    rep.budget = dict(sub.budget, support=[list(k) for k in support.sorted()],
                      gram_condition=float(np.linalg.cond(gram)))
    rep.notes = sub.notes
    return rep
