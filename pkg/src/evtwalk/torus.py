"""Toral automorphisms on an exact fixed-point grid.

A point of T^d is stored as d unsigned integers c_k with value c_k / 2^B.
Integer matrices map the grid 2^-B Z^d / Z^d onto itself, so an orbit
computed here is an exact orbit of the automorphism on that grid; uint64
arithmetic wraps modulo 2^64, and a mask reduces further to 2^B.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numba
import numpy as np

from . import rng
from .errors import BallTooLarge, InfiniteDelta, NonUnimodular, WordLimitExceeded
from .evt import ball_volume
from .walkcore import GeneratorMeasure, SeedPlan, validate_measure

WORD_CAP = 10**6


def _mask(bits: int) -> np.uint64:
    if not 1 <= bits <= 64:
        raise ValueError(f"bits must be in 1..64, got {bits}")
    return np.uint64((1 << bits) - 1)


@dataclass(frozen=True)
class TorusPoint:
    coords: np.ndarray
    bits: int = 64

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=np.uint64) & _mask(self.bits)
        object.__setattr__(self, "coords", c)

    @property
    def dim(self) -> int:
        return int(self.coords.size)

    @classmethod
    def from_floats(cls, xs, bits: int = 64) -> "TorusPoint":
        # exact for dyadic inputs such as 0.5 or 0.125
        scaled = [int(round(math.fmod(float(x), 1.0) * 2**bits)) % (1 << bits) for x in xs]
        return cls(np.array(scaled, dtype=np.uint64), bits)

    @classmethod
    def random(cls, sp: SeedPlan, d: int, bits: int = 64, lane: int = rng.LANE_INIT) -> "TorusPoint":
        raw = rng.raw_u64(sp.master_seed, sp.trajectory_index, lane, d)
        return cls(raw, bits)

    def to_floats(self) -> np.ndarray:
        return self.coords.astype(np.float64) * 2.0**-self.bits

    def __eq__(self, other):
        return (
            isinstance(other, TorusPoint)
            and self.bits == other.bits
            and np.array_equal(self.coords, other.coords)
        )

    def __hash__(self):
        return hash((self.bits, self.coords.tobytes()))


@dataclass(frozen=True)
class TorusAutomorphism:
    entries: np.ndarray = field()

    def __post_init__(self):
        e = np.asarray(self.entries)
        if e.ndim != 2 or e.shape[0] != e.shape[1]:
            raise ValueError("automorphism must be a square matrix")
        if not np.all(e == np.rint(e)):
            raise NonUnimodular("automorphism entries must be integers")
        e = np.rint(e).astype(np.int64)
        det = round(np.linalg.det(e))
        if abs(det) != 1:
            raise NonUnimodular(f"automorphism needs determinant +-1, got {det}")
        object.__setattr__(self, "entries", e)

    def inverse(self) -> "TorusAutomorphism":
        return TorusAutomorphism(np.rint(np.linalg.inv(self.entries)))


def as_u64(mats) -> np.ndarray:
    """Integer matrices in two's complement, so uint64 products wrap correctly."""
    return np.rint(np.asarray(mats, dtype=float)).astype(np.int64).view(np.uint64)


def apply_automorphism(A, x: TorusPoint) -> TorusPoint:
    """A x mod 1, exactly."""
    ent = A.entries if isinstance(A, TorusAutomorphism) else A
    ent = np.asarray(ent)
    if ent.shape != (x.dim, x.dim):
        raise ValueError(f"matrix shape {ent.shape} does not match point dimension {x.dim}")
    return TorusPoint(_matvec(as_u64(ent), x.coords, _mask(x.bits)), x.bits)


@numba.njit(cache=True)
def _matvec(m, c, mask):
    d = c.shape[0]
    out = np.empty(d, dtype=np.uint64)
    for r in range(d):
        acc = np.uint64(0)
        for k in range(d):
            acc += m[r, k] * c[k]
        out[r] = acc & mask
    return out


@numba.njit(cache=True, inline="always")
def _wrap_sq(x, y, mask, half, scale):
    """Squared wrap-around distance between fixed-point points x, y."""
    s = 0.0
    for k in range(x.shape[0]):
        delta = (x[k] - y[k]) & mask
        if delta > half:
            delta = (mask - delta) + np.uint64(1)
        f = np.float64(delta) * scale
        s += f * f
    return s


@numba.njit(cache=True)
def _dist(x, y, bits, mask):
    half = np.uint64(1) << np.uint64(bits - 1)
    return math.sqrt(_wrap_sq(x, y, mask, half, 2.0**-bits))


def torus_distance(x: TorusPoint, y: TorusPoint) -> float:
    if x.dim != y.dim or x.bits != y.bits:
        raise ValueError("points must share dimension and resolution")
    return float(_dist(x.coords, y.coords, x.bits, _mask(x.bits)))


def closest_return_delta(x: TorusPoint, x0: TorusPoint) -> float:
    """-log d(x, x0)."""
    dist = torus_distance(x, x0)
    if dist == 0.0:
        raise InfiniteDelta("x coincides with the target point")
    return -math.log(dist)


def exact_torus_tail(z: float, d: int) -> float:
    """m{Delta >= z} = V_d e^{-dz}, exact while the ball of radius e^{-z} embeds."""
    radius = math.exp(-z)
    if radius > 0.5:
        raise BallTooLarge(f"radius e^-z = {radius:.6g} exceeds 1/2")
    val = ball_volume(d) * math.exp(-d * z)
    if val >= 1.0:
        warnings.warn(f"ball of radius {radius} has full measure in T^{d}; tail is degenerate", stacklevel=2)
    return val


# ------------------------------------------------------------ det condition

@dataclass
class DetReport:
    """Result of a finite-depth search for words w with det(w - I) = 0.

    ``passed`` only means no violation up to ``max_word_len``; it is not a
    proof for the whole semigroup.
    """

    passed: bool
    max_word_len: int
    words_checked: int
    violations: list = field(default_factory=list)


def _det_exact(m) -> int:
    m = [[int(v) for v in row] for row in m]
    n = len(m)
    # Bareiss fraction-free elimination
    sign, prev = 1, 1
    for k in range(n - 1):
        if m[k][k] == 0:
            for i in range(k + 1, n):
                if m[i][k] != 0:
                    m[k], m[i] = m[i], m[k]
                    sign = -sign
                    break
            else:
                return 0
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                m[i][j] = (m[i][j] * m[k][k] - m[i][k] * m[k][j]) // prev
        prev = m[k][k]
    return sign * m[n - 1][n - 1]


def check_det_condition(m: GeneratorMeasure, max_word_len: int) -> DetReport:
    """Search all products of support elements of length 1..max_word_len."""
    m = validate_measure(m, "torus")
    g = m.size
    total = sum(g**k for k in range(1, max_word_len + 1))
    if total > WORD_CAP:
        raise WordLimitExceeded(f"{total} words up to length {max_word_len} exceed the cap of {WORD_CAP}")
    d = m.dim
    gens = [np.array(e, dtype=object) for e in m.int_elements()]
    eye = np.eye(d, dtype=np.int64).astype(object)
    violations = []
    checked = 0
    layer = [((), eye)]
    for _ in range(max_word_len):
        nxt = []
        for word, mat in layer:
            for k in range(g):
                # word (k, ...) means g_k applied last: product = g_k @ mat
                prod = gens[k].dot(mat)
                w = (k,) + word
                checked += 1
                if _det_exact(prod - eye) == 0:
                    violations.append((w, prod.astype(np.int64) if _fits(prod) else prod))
                nxt.append((w, prod))
        layer = nxt
    return DetReport(not violations, max_word_len, checked, violations)


def _fits(a) -> bool:
    return all(abs(int(v)) < 2**62 for v in np.ravel(a))


# ------------------------------------------------------------------ kernels

TARGET_RANDOM = 0  # independent uniform target per trajectory
TARGET_START = 1  # target is the trajectory's own starting point
TARGET_COMMON = 2  # one uniform target shared by all trajectories


@numba.njit(cache=True, nogil=True)
def _observe_block(mats, cumw, seed, traj0, count, bits, mask, times, target_mode, window, include_start):
    """Delta(X_t) = -log d(X_t, x0) at the sorted times, for ``count`` trajectories.

    With ``window`` the entry for times[j] is instead the max of Delta over
    steps times[j-1] < s <= times[j] (the first window starts at step 0 if
    ``include_start`` else at step 1).
    """
    d = mats.shape[1]
    half = np.uint64(1) << np.uint64(bits - 1)
    scale = 2.0**-bits
    nt = times.shape[0]
    out = np.empty((count, nt), dtype=np.float64)
    x = np.empty(d, dtype=np.uint64)
    y = np.empty(d, dtype=np.uint64)
    x0 = np.empty(d, dtype=np.uint64)
    common = np.empty(d, dtype=np.uint64)
    kc = rng.stream_key(seed, np.uint64(0), rng.LANE_TARGET)
    for k in range(d):
        common[k] = rng.draw_u64(kc, k) & mask
    for t in range(count):
        traj = traj0 + t
        ks = rng.stream_key(seed, np.uint64(traj), rng.LANE_STEPS)
        ki = rng.stream_key(seed, np.uint64(traj), rng.LANE_INIT)
        kt = rng.stream_key(seed, np.uint64(traj), rng.LANE_TARGET)
        for k in range(d):
            x[k] = rng.draw_u64(ki, k) & mask
        for k in range(d):
            if target_mode == 0:
                x0[k] = rng.draw_u64(kt, k) & mask
            elif target_mode == 1:
                x0[k] = x[k]
            else:
                x0[k] = common[k]
        step = 0
        for j in range(nt):
            # smallest squared distance seen in the current window
            best = np.inf
            if window and step == 0 and include_start:
                best = _wrap_sq(x, x0, mask, half, scale)
            while step < times[j]:
                step += 1
                gi = rng.pick(cumw, rng.draw_uniform(ks, step))
                for r in range(d):
                    acc = np.uint64(0)
                    for c in range(d):
                        acc += mats[gi, r, c] * x[c]
                    y[r] = acc & mask
                for r in range(d):
                    x[r] = y[r]
                if window:
                    s = _wrap_sq(x, x0, mask, half, scale)
                    if s < best:
                        best = s
            if not window:
                best = _wrap_sq(x, x0, mask, half, scale)
            out[t, j] = np.inf if best == 0.0 else -0.5 * math.log(best)
    return out


def observe_deltas(
    m: GeneratorMeasure,
    seed: int,
    traj0: int,
    count: int,
    times,
    bits: int = 64,
    target: int = TARGET_RANDOM,
    window: bool = False,
    include_start: bool = True,
) -> np.ndarray:
    """Closest-return Delta at the given walk times for trajectories traj0..traj0+count-1.

    Each trajectory starts at a uniform grid point; the generator at step i is
    drawn from the trajectory's own counter-based stream.  Entries are +inf
    when the walk lands exactly on the target.  ``window=True`` returns the
    max of Delta between consecutive times instead (see ``_observe_block``).
    """
    times = np.asarray(times, dtype=np.int64)
    if times.ndim != 1 or times.size == 0 or np.any(np.diff(times) <= 0) or times[0] < 0:
        raise ValueError("times must be a non-empty strictly increasing sequence of non-negative integers")
    return _observe_block(
        as_u64(m.elements), m.cumulative(), np.uint64(rng.check_seed(seed)),
        int(traj0), int(count), int(bits), _mask(bits), times, int(target),
        bool(window), bool(include_start),
    )


def uniform_deltas(seed: int, count: int, d: int, bits: int = 64, traj0: int = 0) -> np.ndarray:
    """Delta of ``count`` independent uniform points w.r.t. one common uniform target."""
    m = GeneratorMeasure.uniform([np.eye(d)])
    return observe_deltas(m, seed, traj0, count, [0], bits, TARGET_COMMON)[:, 0]


def torus_action(g, x: TorusPoint) -> TorusPoint:
    """Action callable for :func:`walkcore.walk_stream` on TorusPoint states."""
    return apply_automorphism(g, x)
