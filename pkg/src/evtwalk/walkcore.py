"""Random-walk engine: generator measures, seeding and trajectory streams.

A walk is ``X_i = g_i X_{i-1}`` with ``g_i`` drawn i.i.d. from a finitely
supported measure.  The left product ``g_i ... g_1`` is never formed; each
generator is applied to the current state as it is drawn.

The generator used at step ``i >= 1`` of trajectory ``t`` is
``pick(cumw, uniform(seed, t, LANE_STEPS, i))``.  The compiled kernels in
:mod:`evtwalk.torus` and :mod:`evtwalk.lattices` follow the same rule, so a
trajectory produced by :func:`walk_stream` and one produced by a kernel see
the same generators.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Iterator, Sequence

import numpy as np

from . import rng
from .errors import BadWeights, EmptySupport, NonIntegerEntries, NonUnimodular

MODES = ("torus", "lattice")


@dataclass(frozen=True)
class GeneratorMeasure:
    """Finitely supported probability measure on matrices.

    ``elements`` has shape (G, d, d); ``weights`` has shape (G,).
    """

    elements: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "elements", np.asarray(self.elements, dtype=float))
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))

    @classmethod
    def uniform(cls, elements: Sequence) -> "GeneratorMeasure":
        elements = np.asarray(elements, dtype=float)
        if elements.ndim == 2:
            elements = elements[None]
        g = len(elements)
        return cls(elements, np.full(g, 1.0 / g) if g else np.zeros(0))

    @property
    def dim(self) -> int:
        return int(self.elements.shape[-1])

    @property
    def size(self) -> int:
        return int(self.elements.shape[0])

    def cumulative(self) -> np.ndarray:
        cw = np.cumsum(self.weights)
        cw[-1] = 1.0
        return cw

    def int_elements(self) -> np.ndarray:
        return np.rint(self.elements).astype(np.int64)


def validate_measure(m: GeneratorMeasure, mode: str) -> GeneratorMeasure:
    """Check the machine-checkable standing assumptions on a measure.

    Weights within 1e-9 of summing to one are renormalised; anything further
    off raises :class:`BadWeights`.  Torus mode needs integer matrices with
    determinant +-1, lattice mode needs determinant 1 to within 1e-9.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    el = np.asarray(m.elements, dtype=float)
    w = np.asarray(m.weights, dtype=float)
    if el.size == 0 or el.shape[0] == 0:
        raise EmptySupport("generator measure has no elements")
    if el.ndim != 3 or el.shape[1] != el.shape[2]:
        raise EmptySupport(f"elements must be a stack of square matrices, got shape {el.shape}")
    if w.shape != (el.shape[0],):
        raise BadWeights(f"{el.shape[0]} elements but {w.size} weights")
    if not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise BadWeights(f"weights must be strictly positive, got {w.tolist()}")
    total = float(w.sum())
    if abs(total - 1.0) >= 1e-9:
        raise BadWeights(f"weights sum to {total!r}, not 1")
    w = w / total

    dets = np.linalg.det(el)
    if mode == "torus":
        if not np.all(el == np.rint(el)):
            raise NonIntegerEntries("torus generators must have integer entries")
        idets = np.rint(dets)
        if np.any(np.abs(idets) != 1) or np.any(np.abs(dets - idets) > 1e-6):
            raise NonUnimodular(f"torus generators need determinant +-1, got {dets.tolist()}")
    else:
        if np.any(np.abs(dets - 1.0) > 1e-9):
            raise NonUnimodular(f"lattice generators need determinant 1, got {dets.tolist()}")
    return GeneratorMeasure(el, w)


def elementary_generators(d: int, step: int = 2) -> np.ndarray:
    """The matrices I + step*E_ij for i != j."""
    out = []
    for i in range(d):
        for j in range(d):
            if i != j:
                e = np.eye(d)
                e[i, j] = step
                out.append(e)
    return np.array(out)


# d=2: two hyperbolic cat maps; d=3: the tridiagonal pair below has no
# eigenvalue-one products up to word length 8 (see check_det_condition).
_TORUS_DEFAULTS = {
    2: [[[2, 1], [1, 1]], [[1, 1], [1, 2]]],
    3: [[[1, 1, 0], [1, 2, 1], [0, 1, 2]], [[2, 1, 0], [1, 2, 1], [0, 1, 1]]],
}


def default_measure(mode: str, d: int) -> GeneratorMeasure:
    """Documented default generator sets.

    Torus: hyperbolic automorphisms for d = 2, 3.  Lattice: {I + 2E_ij}, which
    for d = 2 is {[[1,2],[0,1]], [[1,0],[2,1]]} and generates a free subgroup
    of SL(2, Z).  Neither the no-amenable-factor-torus condition nor
    non-amenability is checked by the code; supplying other generators makes
    those hypotheses the caller's responsibility.
    """
    if mode == "torus":
        if d not in _TORUS_DEFAULTS:
            raise ValueError(f"no default torus generators for d={d}; pass generators explicitly")
        return GeneratorMeasure.uniform(_TORUS_DEFAULTS[d])
    if mode == "lattice":
        if not 2 <= d <= 8:
            raise ValueError(f"lattice mode supports 2 <= d <= 8, got {d}")
        return GeneratorMeasure.uniform(elementary_generators(d))
    raise ValueError(f"unknown mode {mode!r}")


@dataclass(frozen=True)
class SeedPlan:
    master_seed: int
    trajectory_index: int = 0

    def __post_init__(self):
        rng.check_seed(self.master_seed)
        if self.trajectory_index < 0:
            raise ValueError("trajectory_index must be non-negative")

    def key(self, lane: int) -> np.uint64:
        return rng.key_for(self.master_seed, self.trajectory_index, lane)

    def uniforms(self, lane: int, count: int, start: int = 0) -> np.ndarray:
        return rng.uniforms(self.master_seed, self.trajectory_index, lane, count, start)


def choice_indices(m: GeneratorMeasure, sp: SeedPlan, first: int, count: int) -> np.ndarray:
    """Generator indices for steps ``first .. first+count-1`` (steps are 1-based)."""
    u = sp.uniforms(rng.LANE_STEPS, count, start=first)
    return np.searchsorted(m.cumulative()[:-1], u, side="right")


Action = Callable[[np.ndarray, Any], Any]


@dataclass
class TrajectoryStream:
    """Single-threaded cursor over one trajectory: ``state`` is X_{step_index}."""

    action: Action
    measure: GeneratorMeasure
    state: Any
    seed_plan: SeedPlan
    step_index: int = 0
    _buf: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64), repr=False)
    _buf_start: int = 1

    def advance(self):
        i = self.step_index + 1
        off = i - self._buf_start
        if off < 0 or off >= self._buf.size:
            self._buf_start = i
            self._buf = choice_indices(self.measure, self.seed_plan, i, 4096)
            off = 0
        g = self.measure.elements[self._buf[off]]
        self.state = self.action(g, self.state)
        self.step_index = i
        return self.state


def walk_stream(action: Action, m: GeneratorMeasure, x0, n: int, sp: SeedPlan) -> Iterator:
    """Yield X_0 = x0, X_1, ..., X_{n-1}."""
    if n < 1:
        raise ValueError("n must be >= 1")
    ts = TrajectoryStream(action, m, x0, sp)
    yield ts.state
    for _ in range(n - 1):
        yield ts.advance()
