"""Integer mode sets, their closure under reflection, and extension chains.

A mode set ``K`` in ``Z^d`` grows by the elementary move ``(r, s) -> 2r - s``
with ``r, s`` already in the set.  Closure iterates that move on every pair.
"""
from __future__ import annotations

import itertools
import json
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import NoChainFound

Mode = tuple


def as_mode(k) -> Mode:
    """Convert a sequence of integers (or one integer in d=1) into a mode tuple."""
    arr = np.atleast_1d(np.asarray(k))
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"mode must be a non-empty integer vector, got {k!r}")
    if not np.all(np.equal(np.mod(arr, 1), 0)):
        raise ValueError(f"mode must have integer entries, got {k!r}")
    return tuple(int(v) for v in arr)


def mode_key(k: Mode) -> tuple:
    """Ordering used for witnesses: small l1 norm first, positive axes first."""
    return (sum(abs(v) for v in k), tuple(-v for v in k))


@dataclass(frozen=True)
class ModeSet:
    """Finite set of integer wave vectors of a fixed dimension."""

    dim: int
    members: frozenset

    def __post_init__(self):
        for k in self.members:
            if len(k) != self.dim:
                raise ValueError(f"mode {k} does not have dimension {self.dim}")

    @classmethod
    def of(cls, modes: Iterable, dim: int | None = None) -> "ModeSet":
        modes = [as_mode(k) for k in modes]
        if dim is None:
            if not modes:
                raise ValueError("cannot infer the dimension of an empty mode set")
            dim = len(modes[0])
        return cls(dim, frozenset(modes))

    @classmethod
    def box(cls, dim: int, radius: int) -> "ModeSet":
        """All modes with sup-norm at most ``radius``."""
        rng = range(-radius, radius + 1)
        return cls(dim, frozenset(itertools.product(rng, repeat=dim)))

    def __contains__(self, k) -> bool:
        return as_mode(k) in self.members

    def __iter__(self):
        return iter(self.sorted())

    def __len__(self) -> int:
        return len(self.members)

    def sorted(self) -> list:
        return sorted(self.members)

    def array(self) -> np.ndarray:
        return np.array(self.sorted(), dtype=np.int64).reshape(-1, self.dim)

    def union(self, other: "ModeSet | Iterable") -> "ModeSet":
        extra = other.members if isinstance(other, ModeSet) else {as_mode(k) for k in other}
        return ModeSet(self.dim, self.members | frozenset(extra))

    def within(self, window: int) -> "ModeSet":
        return ModeSet(self.dim, frozenset(k for k in self.members
                                           if max(abs(v) for v in k) <= window))

    def to_json(self) -> str:
        return json.dumps([list(k) for k in self.sorted()])

    @classmethod
    def from_json(cls, text: str) -> "ModeSet":
        return cls.of(json.loads(text))


@dataclass(frozen=True)
class ExtensionStep:
    """One elementary move: ``new = 2 r - s``."""

    r: Mode
    s: Mode
    new: Mode

    def __post_init__(self):
        expected = tuple(2 * a - b for a, b in zip(self.r, self.s))
        if expected != tuple(self.new):
            raise ValueError(f"step {self.r},{self.s} produces {expected}, not {self.new}")
        if tuple(self.r) == tuple(self.s):
            raise ValueError("an elementary move needs two distinct modes")

    def as_dict(self) -> dict:
        return {"r": list(self.r), "s": list(self.s), "new": list(self.new)}


@dataclass(frozen=True)
class ExtensionChain:
    """Base set plus an ordered list of elementary moves."""

    base: ModeSet
    steps: tuple

    def __post_init__(self):
        self.replay()

    def replay(self) -> list:
        """Successive mode sets ``K_0, K_1, ...``; raises if a move is illegal."""
        sets = [self.base]
        current = set(self.base.members)
        for step in self.steps:
            if step.r not in current or step.s not in current:
                raise ValueError(f"step {step.as_dict()} uses a mode outside the current set")
            current.add(step.new)
            sets.append(ModeSet(self.base.dim, frozenset(current)))
        return sets

    @property
    def final(self) -> ModeSet:
        return self.replay()[-1]

    def __len__(self) -> int:
        return len(self.steps)

    def to_list(self) -> list:
        return [step.as_dict() for step in self.steps]

    def to_json(self) -> str:
        return json.dumps(self.to_list())

    @classmethod
    def from_list(cls, base: ModeSet, items: Sequence[dict]) -> "ExtensionChain":
        steps = tuple(ExtensionStep(as_mode(d["r"]), as_mode(d["s"]), as_mode(d["new"]))
                      for d in items)
        return cls(base, steps)


def elementary_extension(modes: ModeSet, r, s) -> ModeSet:
    """Add ``2r - s`` to ``modes``."""
    r, s = as_mode(r), as_mode(s)
    if r not in modes.members or s not in modes.members:
        raise ValueError("both r and s must belong to the mode set")
    new = tuple(2 * a - b for a, b in zip(r, s))
    return modes.union([new])


def _reflections(points: np.ndarray) -> np.ndarray:
    """All ``2m - n`` over ordered pairs of rows."""
    diff = 2 * points[:, None, :] - points[None, :, :]
    return diff.reshape(-1, points.shape[1])


def _closure_levels(base: ModeSet, window: int, max_iter: int):
    """Closure levels inside a halo of twice the window.

    Yields ``(level_set, new_modes)``; stops at a fixed point or after
    ``max_iter`` closure applications.
    """
    halo = 2 * window
    current = {k for k in base.members if max(abs(v) for v in k) <= halo}
    yield frozenset(current), frozenset(current)
    for _ in range(max_iter):
        pts = np.array(sorted(current), dtype=np.int64).reshape(-1, base.dim)
        cand = _reflections(pts)
        cand = cand[np.abs(cand).max(axis=1) <= halo]
        found = {tuple(int(v) for v in row) for row in np.unique(cand, axis=0)}
        fresh = found - current
        if not fresh:
            return
        current |= fresh
        yield frozenset(current), frozenset(fresh)


def closure_sequence(base: ModeSet, window: int, max_iter: int | None = None) -> list:
    """Closure iterates of ``base`` restricted to the sup-norm ball of radius ``window``.

    Iteration stops at a fixed point of the internal (halo) set or after
    ``max_iter`` applications (default ``4 * window``).
    """
    if window < 0:
        raise ValueError("window must be non-negative")
    max_iter = 4 * window if max_iter is None else max_iter
    return [ModeSet(base.dim, frozenset(level)).within(window)
            for level, _ in _closure_levels(base, window, max_iter)]


def is_saturating_within(base: ModeSet, window: int, max_iter: int | None = None):
    """Check whether the closure of ``base`` fills the window box.

    Returns
    -------
    (bool, witness)
        ``witness`` is the first unreached mode (small l1 norm first, ties
        toward positive axes), or ``None`` when the box is filled.
    """
    final = closure_sequence(base, window, max_iter)[-1]
    missing = ModeSet.box(base.dim, window).members - final.members
    if not missing:
        return True, None
    return False, min(missing, key=mode_key)


class DeterminantWarning(UserWarning):
    """Generators of a cube do not span the integer lattice."""


def build_cube_generators(generators: Sequence) -> ModeSet:
    """Vertices ``sum_{i in A} k_i`` of the cube spanned by ``d`` generators.

    A warning is issued when the generator determinant is not ``+-1``; such
    cubes cannot saturate the full lattice.
    """
    gens = np.array([as_mode(k) for k in generators], dtype=np.int64)
    if gens.ndim != 2 or gens.shape[0] != gens.shape[1]:
        raise ValueError("need exactly d generators in Z^d")
    det = int(round(np.linalg.det(gens.astype(float))))
    if det == 0:
        raise ValueError("generators are linearly dependent")
    if abs(det) != 1:
        warnings.warn(f"generator determinant is {det}; the cube is not saturating",
                      DeterminantWarning, stacklevel=2)
    d = gens.shape[0]
    verts = [tuple(int(v) for v in (np.array(sel) @ gens))
             for sel in itertools.product((0, 1), repeat=d)]
    return ModeSet(d, frozenset(verts))


def _pair_cost(r: Mode, s: Mode) -> tuple:
    return (sum(abs(v) for v in r) + sum(abs(v) for v in s), r, s)


def plan_extension_chain(base: ModeSet, targets: Iterable, window: int,
                         max_iter: int | None = None) -> ExtensionChain:
    """Breadth-first chain of elementary moves that reaches every target.

    Each new mode is derived from the earliest closure level containing a
    valid pair; among those pairs the smallest ``|r|_1 + |s|_1`` wins, then
    lexicographic order.  The chain keeps only ancestors of the targets.
    """
    targets = [as_mode(k) for k in targets]
    max_iter = 4 * window if max_iter is None else max_iter
    parents: dict = {}
    depth = {k: 0 for k in base.members}
    previous = None
    for level, fresh in _closure_levels(base, window, max_iter):
        if previous is not None:
            pts = sorted(previous)
            pset = previous
            for new in sorted(fresh):
                best = None
                for r in pts:
                    s = tuple(2 * a - b for a, b in zip(r, new))
                    if s in pset and s != r:
                        cand = _pair_cost(r, s)
                        if best is None or cand < best:
                            best = cand
                parents[new] = (best[1], best[2])
                depth[new] = max(depth[best[1]], depth[best[2]]) + 1
        previous = level
        if all(t in level for t in targets):
            break
    missing = [t for t in targets if t not in depth]
    if missing:
        raise NoChainFound(f"modes {missing} not reachable within window {window}")

    needed: set = set()
    stack = [t for t in targets if t not in base.members]
    while stack:
        k = stack.pop()
        if k in needed:
            continue
        needed.add(k)
        stack.extend(p for p in parents[k] if p not in base.members)
    order = sorted(needed, key=lambda k: (depth[k], k))
    steps = tuple(ExtensionStep(parents[k][0], parents[k][1], k) for k in order)
    return ExtensionChain(base, steps)
