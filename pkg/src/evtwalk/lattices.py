"""Unimodular lattices: reduction, shortest vectors, Haar sampling and the
modular-surface distance used for cusp excursions (d = 2).

A lattice is stored by a row basis (each row is a lattice vector).  A group
element g acts by v -> g v, i.e. rows -> rows @ g.T; the walk then reduces
the basis so float error does not compound with the growth of g_i ... g_1.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numba
import numpy as np

from . import rng
from .errors import (
    BudgetExceeded,
    DetCollapsed,
    IllConditioned,
    ReductionDiverged,
)
from .walkcore import GeneratorMeasure, SeedPlan, choice_indices

COND_MAX = 1e12
ORACLE_BUDGET = 10**8
MAX_REDUCTION_STEPS = 10**4
SQRT3_2 = math.sqrt(3.0) / 2.0

# status codes returned by compiled kernels
OK = 0
ERR_REDUCTION = 1
ERR_DET = 2


@dataclass
class LatticeBasis:
    rows: np.ndarray
    det_drift: float = 0.0

    def __post_init__(self):
        self.rows = np.array(self.rows, dtype=float)
        if self.rows.ndim != 2 or self.rows.shape[0] != self.rows.shape[1]:
            raise ValueError(f"basis must be square, got shape {self.rows.shape}")
        self.det_drift = abs(self.det - 1.0)

    @property
    def dim(self) -> int:
        return self.rows.shape[0]

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.rows))

    def act(self, g) -> "LatticeBasis":
        return LatticeBasis(self.rows @ np.asarray(g, dtype=float).T)


@dataclass
class ShortestVectorResult:
    vector: np.ndarray
    length: float
    certified: bool


@dataclass(frozen=True)
class ModularPoint:
    z: complex

    def __post_init__(self):
        z = complex(self.z)
        if not (z.imag > 0 and abs(z.real) <= 0.5 + 1e-12 and abs(z) >= 1 - 1e-12):
            raise ValueError(f"{z} is not in the standard fundamental domain")


def _check_conditioning(rows: np.ndarray):
    c = np.linalg.cond(rows)
    if not np.isfinite(c) or c > COND_MAX:
        raise IllConditioned(f"basis condition number {c:.3g} exceeds {COND_MAX:g}")


# ------------------------------------------------------------ reduction core

@numba.njit(cache=True, inline="always")
def _gauss2(a, b, c, e):
    """Lagrange reduction of rows (a, b), (c, e); first row becomes shortest."""
    n1 = a * a + b * b
    n2 = c * c + e * e
    if n2 < n1:
        a, b, c, e = c, e, a, b
        n1, n2 = n2, n1
    for _ in range(MAX_REDUCTION_STEPS):
        mu = np.rint((a * c + b * e) / n1)
        c -= mu * a
        e -= mu * b
        n2 = c * c + e * e
        if n2 >= n1:
            return a, b, c, e, True
        a, b, c, e = c, e, a, b
        n1, n2 = n2, n1
    return a, b, c, e, False


@numba.njit(cache=True)
def _gso(B, mu, bs):
    d = B.shape[0]
    bstar = np.empty_like(B)
    for i in range(d):
        for t in range(d):
            bstar[i, t] = B[i, t]
        for j in range(i):
            dot = 0.0
            for t in range(d):
                dot += B[i, t] * bstar[j, t]
            mu[i, j] = dot / bs[j]
            for t in range(d):
                bstar[i, t] -= mu[i, j] * bstar[j, t]
        mu[i, i] = 1.0
        s = 0.0
        for t in range(d):
            s += bstar[i, t] * bstar[i, t]
        bs[i] = s


@numba.njit(cache=True)
def _lll(B, delta):
    """In-place LLL reduction of the rows of B. Returns False if it did not converge."""
    d = B.shape[0]
    mu = np.zeros((d, d))
    bs = np.zeros(d)
    _gso(B, mu, bs)
    k = 1
    it = 0
    while k < d:
        it += 1
        if it > 100 * MAX_REDUCTION_STEPS:
            return False
        for j in range(k - 1, -1, -1):
            q = np.rint(mu[k, j])
            if q != 0.0:
                for t in range(d):
                    B[k, t] -= q * B[j, t]
                for l in range(j + 1):
                    mu[k, l] -= q * mu[j, l]
        if bs[k] >= (delta - mu[k, k - 1] ** 2) * bs[k - 1]:
            k += 1
        else:
            for t in range(d):
                tmp = B[k, t]
                B[k, t] = B[k - 1, t]
                B[k - 1, t] = tmp
            _gso(B, mu, bs)
            k = max(k - 1, 1)
    return True


@numba.njit(cache=True)
def _svp_enum(B):
    """Exact shortest nonzero vector of the lattice spanned by the rows of B.

    Schnorr-Euchner enumeration; B should be LLL-reduced so the search
    radius |b_1| is small.  Returns (squared length, coefficient vector).
    """
    d = B.shape[0]
    mu = np.zeros((d, d))
    bs = np.zeros(d)
    _gso(B, mu, bs)
    best = 0.0
    best_x = np.zeros(d, dtype=np.int64)
    for i in range(d):
        s = 0.0
        for t in range(d):
            s += B[i, t] * B[i, t]
        if i == 0 or s < best:
            best = s
            best_x[:] = 0
            best_x[i] = 1
    x = np.zeros(d, dtype=np.int64)
    center = np.zeros(d)
    rho = np.zeros(d + 1)
    sgn = np.zeros(d, dtype=np.int64)
    cnt = np.zeros(d, dtype=np.int64)
    xc = np.zeros(d, dtype=np.int64)
    k = d - 1
    center[k] = 0.0
    xc[k] = 0
    sgn[k] = 1
    cnt[k] = 0
    x[k] = 0
    while True:
        diff = x[k] - center[k]
        r = rho[k + 1] + diff * diff * bs[k]
        if r < best * (1.0 - 1e-13):
            if k == 0:
                if r > 1e-300:
                    best = r
                    best_x[:] = x
                # next sibling at level 0
                cnt[0] += 1
                x[0] = _zig(xc[0], sgn[0], cnt[0])
            else:
                rho[k] = r
                k -= 1
                c = 0.0
                for j in range(k + 1, d):
                    c -= x[j] * mu[j, k]
                center[k] = c
                xc[k] = np.int64(np.rint(c))
                sgn[k] = 1 if c >= xc[k] else -1
                cnt[k] = 0
                x[k] = xc[k]
        else:
            k += 1
            if k >= d:
                break
            cnt[k] += 1
            # top of a zero prefix: v and -v are equivalent, go one way only
            top_zero = True
            for j in range(k + 1, d):
                if x[j] != 0:
                    top_zero = False
                    break
            if top_zero and xc[k] == 0:
                x[k] = cnt[k]
            else:
                x[k] = _zig(xc[k], sgn[k], cnt[k])
    return best, best_x


@numba.njit(cache=True, inline="always")
def _zig(xc, s, n):
    """n-th element of xc, xc+s, xc-s, xc+2s, xc-2s, ..."""
    m = (n + 1) // 2
    if n % 2 == 1:
        return xc + s * m
    return xc - s * m


# ------------------------------------------------------------ public reduction

def reduce_basis(b: LatticeBasis, method: str = "lll", delta: float = 0.75) -> LatticeBasis:
    """Return a reduced basis of the same lattice.

    ``gauss`` (d = 2) gives a Lagrange-reduced basis whose first row is a
    shortest vector; ``lll`` (2 <= d <= 8) gives an LLL-reduced basis.
    """
    rows = np.array(b.rows, dtype=float)
    d = rows.shape[0]
    if not 0.25 < delta < 1:
        raise ValueError("delta must lie in (1/4, 1)")
    _check_conditioning(rows)
    if method == "gauss":
        if d != 2:
            raise ValueError("gauss reduction is for d = 2")
        a, bb, c, e, ok = _gauss2(rows[0, 0], rows[0, 1], rows[1, 0], rows[1, 1])
        if not ok:
            raise ReductionDiverged("Lagrange reduction did not terminate")
        out = np.array([[a, bb], [c, e]])
    elif method == "lll":
        if not 2 <= d <= 8:
            raise ValueError("lll reduction supports 2 <= d <= 8")
        out = rows.copy()
        if not _lll(out, delta):
            raise ReductionDiverged("LLL did not terminate")
    else:
        raise ValueError(f"unknown reduction method {method!r}")
    if np.linalg.det(out) < 0:
        # keep the orientation; negating a row preserves the lattice and reducedness
        out[-1] = -out[-1]
    return LatticeBasis(out)


def shortest_vector(b: LatticeBasis) -> ShortestVectorResult:
    """Exact shortest vector: Lagrange reduction (d = 2) or LLL + enumeration."""
    d = b.dim
    if d > 8:
        raise ValueError("shortest_vector supports d <= 8")
    if d == 2:
        red = reduce_basis(b, "gauss").rows
        v = red[0]
    else:
        red = reduce_basis(b, "lll", 0.99).rows
        sq, x = _svp_enum(red)
        v = x.astype(float) @ red
    return ShortestVectorResult(v, float(np.linalg.norm(v)), True)


def shortest_vector_oracle(b: LatticeBasis, C: int) -> ShortestVectorResult:
    """Brute force over integer coefficient vectors in [-C, C]^d.

    ``certified`` is True when the answer is provably global: every lattice
    vector no longer than the minimum found has all coefficients bounded by
    |v| * |column of B^-1| <= C, so it was inside the search box.
    """
    rows = np.asarray(b.rows, dtype=float)
    d = rows.shape[0]
    if C < 1:
        raise ValueError("C must be >= 1")
    if C**d > ORACLE_BUDGET:
        raise BudgetExceeded(f"C^d = {C**d} exceeds {ORACLE_BUDGET}")
    rng_c = np.arange(-C, C + 1)
    inner = min(d, 3)
    tail = np.array(list(itertools.product(rng_c, repeat=inner)), dtype=float)
    tail_vecs = tail @ rows[d - inner:]
    best_sq, best_coef = np.inf, None
    for head in itertools.product(rng_c, repeat=d - inner):
        base = np.asarray(head, dtype=float) @ rows[: d - inner] if head else np.zeros(d)
        sq = ((tail_vecs + base) ** 2).sum(axis=1)
        if not any(head):
            sq[np.all(tail == 0, axis=1)] = np.inf
        i = int(np.argmin(sq))
        if sq[i] < best_sq:
            best_sq = float(sq[i])
            best_coef = np.concatenate([np.asarray(head, dtype=float), tail[i]])
    v = best_coef @ rows
    length = math.sqrt(best_sq)
    inv_cols = np.linalg.norm(np.linalg.inv(rows), axis=0)
    certified = bool(length * inv_cols.max() <= C)
    return ShortestVectorResult(v, length, certified)


def delta_shortest(b: LatticeBasis) -> float:
    """-log of the shortest vector length."""
    return -math.log(shortest_vector(b).length)


def renormalize_det(b: LatticeBasis) -> LatticeBasis:
    """Rescale rows so the determinant is exactly 1 again (float-drift control)."""
    det = b.det
    if abs(det) < 1e-3:
        raise DetCollapsed(f"determinant {det:.3g} has collapsed")
    if abs(det - 1.0) > 1e-3:
        raise ValueError(f"determinant {det!r} is not within 1e-3 of 1")
    return LatticeBasis(b.rows * det ** (-1.0 / b.dim))


# ------------------------------------------------------------- Haar sampling

@numba.njit(cache=True, inline="always")
def _haar2(key):
    """(x, y, theta) with x + iy Haar-distributed in the fundamental domain."""
    c = 0
    while True:
        x = rng.draw_uniform(key, c) - 0.5
        y = SQRT3_2 / rng.draw_open_uniform(key, c + 1)
        c += 2
        if x * x + y * y >= 1.0:
            break
    th = 2.0 * math.pi * rng.draw_uniform(key, c)
    return x, y, th


@numba.njit(cache=True, inline="always")
def _basis_from_zt(x, y, th):
    s = 1.0 / math.sqrt(y)
    ct, st = math.cos(th), math.sin(th)
    # rows (1,0)/sqrt(y) and (x,y)/sqrt(y), each rotated by theta
    a, b = s * ct, s * st
    c, e = s * (x * ct - y * st), s * (x * st + y * ct)
    return a, b, c, e


@numba.njit(cache=True)
def _haar2_block(seed, traj0, count, lane):
    out = np.empty((count, 2, 2))
    for t in range(count):
        key = rng.stream_key(seed, np.uint64(traj0 + t), lane)
        x, y, th = _haar2(key)
        a, b, c, e = _basis_from_zt(x, y, th)
        out[t, 0, 0] = a
        out[t, 0, 1] = b
        out[t, 1, 0] = c
        out[t, 1, 1] = e
    return out


def haar_sample_2d(sp: SeedPlan) -> LatticeBasis:
    """Exact Haar-random unimodular lattice in R^2.

    x ~ U[-1/2, 1/2] and y ~ density prop. to y^-2 on [sqrt(3)/2, inf) by
    inverse CDF, rejected unless x^2 + y^2 >= 1; this is exactly dx dy / y^2
    on the fundamental domain.  A uniform rotation covers the circle fiber.
    """
    return LatticeBasis(haar_samples_2d(sp.master_seed, 1, sp.trajectory_index)[0])


def haar_samples_2d(seed: int, count: int, traj0: int = 0, lane: int = rng.LANE_INIT) -> np.ndarray:
    """(count, 2, 2) array of Haar-random row bases, one per trajectory index."""
    return _haar2_block(np.uint64(rng.check_seed(seed)), int(traj0), int(count), int(lane))


@numba.njit(cache=True)
def _random_start(key, d):
    """Gaussian random basis rescaled to determinant 1 (a burn-in start, not Haar)."""
    B = np.empty((d, d))
    c = 0
    for i in range(d):
        for j in range(d):
            u1 = rng.draw_open_uniform(key, c)
            u2 = rng.draw_uniform(key, c + 1)
            c += 2
            B[i, j] = math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)
    det = np.linalg.det(B)
    if det < 0:
        for j in range(d):
            B[0, j] = -B[0, j]
        det = -det
    B *= det ** (-1.0 / d)
    return B


def random_start(sp: SeedPlan, d: int) -> LatticeBasis:
    rows = _random_start(sp.key(rng.LANE_INIT), d)
    return reduce_basis(LatticeBasis(rows), "lll", 0.99)


def lattice_action(g, b: LatticeBasis) -> LatticeBasis:
    """One walk step on bases: apply g, then reduce (Gauss for d = 2, LLL otherwise)."""
    nb = b.act(g)
    if nb.dim == 2:
        nb = reduce_basis(nb, "gauss")
    else:
        nb = reduce_basis(nb, "lll", 0.99)
    if nb.det_drift > 1e-9:
        nb = renormalize_det(nb)
    return nb


def burn_in_sample(m: GeneratorMeasure, steps: int, x_init: LatticeBasis, sp: SeedPlan) -> LatticeBasis:
    """Run ``steps`` walk steps from ``x_init`` on the burn-in lane.

    Approximates Haar initialisation for d >= 3; the result is biased by
    whatever has not yet mixed after ``steps`` steps.
    """
    if steps < 1:
        raise ValueError("burn-in needs at least one step")
    idx = np.searchsorted(m.cumulative()[:-1], sp.uniforms(rng.LANE_BURNIN, steps, start=1), side="right")
    b = x_init
    for k in idx:
        b = lattice_action(m.elements[k], b)
    return b


# --------------------------------------------------------- modular surface

@numba.njit(cache=True, inline="always")
def _basis_to_z(a, b, c, e):
    det = a * e - b * c
    if det < 0:
        c, e, det = -c, -e, -det
    n1 = a * a + b * b
    return (a * c + b * e) / n1, det / n1


@numba.njit(cache=True, inline="always")
def _to_fd(x, y):
    """Reduce x + iy into |Re z| <= 1/2, |z| >= 1. Returns (x, y, ok)."""
    for _ in range(MAX_REDUCTION_STEPS):
        x -= np.rint(x)
        r2 = x * x + y * y
        if r2 >= 1.0:
            return x, y, True
        x, y = -x / r2, y / r2
    return x, y, False


@numba.njit(cache=True, inline="always")
def _hdist(x1, y1, x2, y2):
    dx, dy = x1 - x2, y1 - y2
    return 2.0 * math.asinh(math.sqrt(dx * dx + dy * dy) / (2.0 * math.sqrt(y1 * y2)))


@numba.njit(cache=True, inline="always")
def _inv(x, y):
    r2 = x * x + y * y
    return -x / r2, y / r2


@numba.njit(cache=True)
def _quotient_dist(x1, y1, x2, y2):
    """min of the hyperbolic distance over w, w+-1, Sw, S(w+-1), Sw+-1."""
    best = _hdist(x1, y1, x2, y2)
    for s in (-1.0, 1.0):
        best = min(best, _hdist(x1, y1, x2 + s, y2))
    ix, iy = _inv(x2, y2)
    best = min(best, _hdist(x1, y1, ix, iy))
    for s in (-1.0, 1.0):
        best = min(best, _hdist(x1, y1, ix + s, iy))
        jx, jy = _inv(x2 + s, y2)
        best = min(best, _hdist(x1, y1, jx, jy))
    return best


def reduce_to_fundamental(z: complex) -> complex:
    z = complex(z)
    if z.imag <= 0:
        raise ValueError("z must lie in the upper half-plane")
    x, y, ok = _to_fd(z.real, z.imag)
    if not ok:
        raise ReductionDiverged(f"no fundamental-domain representative found for {z} in {MAX_REDUCTION_STEPS} steps")
    return complex(x, y)


def modular_point(b) -> ModularPoint:
    """Project a d = 2 lattice (basis or complex number) to the modular surface."""
    if isinstance(b, (complex, float, int)):
        z = complex(b)
    else:
        rows = b.rows if isinstance(b, LatticeBasis) else np.asarray(b, dtype=float)
        if rows.shape != (2, 2):
            raise ValueError("modular distance is defined for d = 2 only")
        x, y = _basis_to_z(rows[0, 0], rows[0, 1], rows[1, 0], rows[1, 1])
        z = complex(x, y)
    return ModularPoint(reduce_to_fundamental(z))


def hyperbolic_distance(z1: complex, z2: complex) -> float:
    """Closed form: cosh d = 1 + |z1 - z2|^2 / (2 Im z1 Im z2)."""
    return float(_hdist(z1.real, z1.imag, z2.real, z2.imag))


def modular_distance(b1, b2) -> float:
    """Distance on the modular surface between two d = 2 lattices.

    Both points are reduced to the fundamental domain, then the minimum over
    a few neighbouring translates of the second is taken.  This bounds the
    quotient distance from above and is exact for interior points.
    """
    z1 = modular_point(b1).z
    z2 = modular_point(b2).z
    d12 = _quotient_dist(z1.real, z1.imag, z2.real, z2.imag)
    d21 = _quotient_dist(z2.real, z2.imag, z1.real, z1.imag)
    return float(min(d12, d21))


# ------------------------------------------------------------ walk kernels

OBS_SHORTEST = 0
OBS_MODULAR = 1


def product_table(m: GeneratorMeasure, max_entry: float = 1e5, max_size: int = 256, max_k: int = 8) -> tuple[np.ndarray, int]:
    """All products g_{k_K} ... g_{k_1} for the largest block length K <= max_k
    keeping the table small and the product entries bounded.

    Table index is sum_s k_s G^s with k_0 the first step of the block.
    """
    g = m.size
    best = (m.elements.copy(), 1)
    for K in range(2, max_k + 1):
        if g**K > max_size:
            break
        table = np.empty((g**K, m.dim, m.dim))
        for idx in range(g**K):
            p = np.eye(m.dim)
            rest = idx
            for _ in range(K):
                p = m.elements[rest % g] @ p
                rest //= g
            table[idx] = p
        if np.abs(table).max() > max_entry:
            break
        best = (table, K)
    return best


@numba.njit(cache=True, nogil=True)
def _obs2(a, b, c, e, obs_kind, z0x, z0y):
    if obs_kind == OBS_SHORTEST:
        return -0.5 * math.log(a * a + b * b), True
    zx, zy = _basis_to_z(a, b, c, e)
    zx, zy, ok = _to_fd(zx, zy)
    return _quotient_dist(z0x, z0y, zx, zy), ok


@numba.njit(cache=True, nogil=True)
def _observe2(table, K, elems, cumw, seed, traj0, count, times, skip, obs_kind, z0x, z0y, renorm_every,
              window, include_start):
    """Delta at the sorted times for ``count`` d = 2 trajectories from Haar starts.

    With ``window`` (requires K = 1) the entry for times[j] is the max of
    Delta over steps times[j-1] < s <= times[j].
    """
    g = elems.shape[0]
    nt = times.shape[0]
    out = np.empty((count, nt))
    max_drift = 0.0
    status = OK
    for t in range(count):
        traj = traj0 + t
        ks = rng.stream_key(seed, np.uint64(traj), rng.LANE_STEPS)
        ki = rng.stream_key(seed, np.uint64(traj), rng.LANE_INIT)
        x, y, th = _haar2(ki)
        a, b, c, e = _basis_from_zt(x, y, th)
        step = times[0] if skip else 0
        since = 0
        for j in range(nt):
            best = -np.inf
            if window and j == 0 and include_start:
                best, ok = _obs2(a, b, c, e, obs_kind, z0x, z0y)
            while step < times[j]:
                if times[j] - step >= K:
                    idx = 0
                    mult = 1
                    for s in range(K):
                        idx += rng.pick(cumw, rng.draw_uniform(ks, step + 1 + s)) * mult
                        mult *= g
                    p00 = table[idx, 0, 0]
                    p01 = table[idx, 0, 1]
                    p10 = table[idx, 1, 0]
                    p11 = table[idx, 1, 1]
                    step += K
                    since += K
                else:
                    gi = rng.pick(cumw, rng.draw_uniform(ks, step + 1))
                    p00 = elems[gi, 0, 0]
                    p01 = elems[gi, 0, 1]
                    p10 = elems[gi, 1, 0]
                    p11 = elems[gi, 1, 1]
                    step += 1
                    since += 1
                a, b = p00 * a + p01 * b, p10 * a + p11 * b
                c, e = p00 * c + p01 * e, p10 * c + p11 * e
                a, b, c, e, ok = _gauss2(a, b, c, e)
                if not ok:
                    status = ERR_REDUCTION
                if since >= renorm_every:
                    since = 0
                    det = a * e - b * c
                    drift = abs(abs(det) - 1.0)
                    if drift > max_drift:
                        max_drift = drift
                    if abs(det) < 1e-3:
                        status = ERR_DET
                    else:
                        sc = 1.0 / math.sqrt(abs(det))
                        a *= sc
                        b *= sc
                        c *= sc
                        e *= sc
                if window:
                    v, ok = _obs2(a, b, c, e, obs_kind, z0x, z0y)
                    if not ok:
                        status = ERR_REDUCTION
                    if v > best:
                        best = v
            if not window:
                best, ok = _obs2(a, b, c, e, obs_kind, z0x, z0y)
                if not ok:
                    status = ERR_REDUCTION
            out[t, j] = best
    return out, max_drift, status


@numba.njit(cache=True)
def _advance_d(B, table, K, elems, cumw, key, step, stop, delta, renorm_every, state):
    """Walk B from ``step`` to ``stop`` with blocked products and LLL after each block.

    ``state`` holds (steps since renormalisation, max det drift, status) and
    is updated in place.
    """
    g, d = elems.shape[0], elems.shape[1]
    while step < stop:
        if stop - step >= K:
            idx = 0
            mult = 1
            for s in range(K):
                idx += rng.pick(cumw, rng.draw_uniform(key, step + 1 + s)) * mult
                mult *= g
            B[:, :] = B @ table[idx].T
            step += K
            state[0] += K
        else:
            gi = rng.pick(cumw, rng.draw_uniform(key, step + 1))
            B[:, :] = B @ elems[gi].T
            step += 1
            state[0] += 1
        if not _lll(B, delta):
            state[2] = ERR_REDUCTION
        if state[0] >= renorm_every:
            state[0] = 0
            det = np.linalg.det(B)
            drift = abs(abs(det) - 1.0)
            if drift > state[1]:
                state[1] = drift
            if abs(det) < 1e-3:
                state[2] = ERR_DET
            else:
                B *= abs(det) ** (-1.0 / d)
    return step


@numba.njit(cache=True)
def _burned_start(B, table, K, elems, cumw, seed, traj, burn_in, delta, renorm_every, state):
    ki = rng.stream_key(seed, np.uint64(traj), rng.LANE_INIT)
    kb = rng.stream_key(seed, np.uint64(traj), rng.LANE_BURNIN)
    B[:, :] = _random_start(ki, B.shape[0])
    if not _lll(B, delta):
        state[2] = ERR_REDUCTION
    state[0] = 0
    _advance_d(B, table, K, elems, cumw, kb, 0, burn_in, delta, renorm_every, state)
    state[0] = 0


@numba.njit(cache=True, nogil=True)
def _observe_d(table, K, btable, bK, elems, cumw, seed, traj0, count, times, skip, burn_in, delta, renorm_every,
               window, include_start):
    """Shortest-vector Delta at the sorted times for d >= 3, from burned-in starts."""
    d = elems.shape[1]
    nt = times.shape[0]
    out = np.empty((count, nt))
    state = np.zeros(3)
    B = np.empty((d, d))
    for t in range(count):
        traj = traj0 + t
        _burned_start(B, btable, bK, elems, cumw, seed, traj, burn_in, delta, renorm_every, state)
        ks = rng.stream_key(seed, np.uint64(traj), rng.LANE_STEPS)
        step = times[0] if skip else 0
        for j in range(nt):
            if window:
                best = -np.inf
                if j == 0 and include_start:
                    sq, _ = _svp_enum(B)
                    best = -0.5 * math.log(sq)
                while step < times[j]:
                    step = _advance_d(B, table, K, elems, cumw, ks, step, step + 1, delta, renorm_every, state)
                    sq, _ = _svp_enum(B)
                    best = max(best, -0.5 * math.log(sq))
                out[t, j] = best
            else:
                step = _advance_d(B, table, K, elems, cumw, ks, step, times[j], delta, renorm_every, state)
                sq, _ = _svp_enum(B)
                out[t, j] = -0.5 * math.log(sq)
    return out, state[1], int(state[2])


@dataclass
class LatticeObservation:
    deltas: np.ndarray
    max_det_drift: float


def observe_lattice(
    m: GeneratorMeasure,
    seed: int,
    traj0: int,
    count: int,
    times,
    observable: str = "shortest",
    target: complex = 1j,
    skip_to_first: bool = False,
    burn_in: int = 1000,
    block_steps: bool = True,
    renorm_every: int = 64,
    window: bool = False,
    include_start: bool = True,
) -> LatticeObservation:
    """Observe a lattice walk at sorted times for trajectories traj0..traj0+count-1.

    d = 2 walks start from exact Haar samples; d >= 3 walks start from a
    random basis followed by ``burn_in`` steps.  With ``skip_to_first`` the
    walk starts at ``times[0]`` instead of 0, which has the same law when the
    start is stationary.  ``observable`` is ``shortest`` (-log of the shortest
    vector) or ``modular`` (d = 2 surface distance to ``target``).

    With ``window=True`` the entry at times[j] is the max of Delta over the
    steps times[j-1] < s <= times[j]; every step is then visited, so block
    products are switched off.
    """
    times = np.asarray(times, dtype=np.int64)
    if times.ndim != 1 or times.size == 0 or np.any(np.diff(times) <= 0) or times[0] < 0:
        raise ValueError("times must be a non-empty strictly increasing sequence of non-negative integers")
    d = m.dim
    if block_steps and not window:
        table, K = product_table(m)
    else:
        table, K = m.elements.copy(), 1
    seed_u = np.uint64(rng.check_seed(seed))
    if d == 2:
        if observable not in ("shortest", "modular"):
            raise ValueError(f"unknown observable {observable!r}")
        z0 = modular_point(target).z
        out, drift, status = _observe2(
            table, K, m.elements, m.cumulative(), seed_u, int(traj0), int(count), times,
            bool(skip_to_first), OBS_SHORTEST if observable == "shortest" else OBS_MODULAR,
            z0.real, z0.imag, int(renorm_every), bool(window), bool(include_start),
        )
    else:
        if observable != "shortest":
            raise ValueError("only the shortest-vector observable is available for d >= 3")
        if not 3 <= d <= 8:
            raise ValueError("lattice walks support d <= 8")
        btable, bK = product_table(m)
        out, drift, status = _observe_d(
            table, K, btable, bK, m.elements, m.cumulative(), seed_u, int(traj0), int(count), times,
            bool(skip_to_first), int(burn_in), 0.99, int(renorm_every), bool(window), bool(include_start),
        )
    if status == ERR_REDUCTION:
        raise ReductionDiverged(f"reduction failed in trajectories {traj0}..{traj0 + count - 1} (seed {seed})")
    if status == ERR_DET:
        raise DetCollapsed(f"determinant collapsed in trajectories {traj0}..{traj0 + count - 1} (seed {seed})")
    return LatticeObservation(out, float(drift))


def haar_modular_deltas(seed: int, count: int, target: complex = 1j, traj0: int = 0) -> np.ndarray:
    """Modular-surface distance to ``target`` for ``count`` Haar samples."""
    b = haar_samples_2d(seed, count, traj0)
    z0 = modular_point(target).z
    return _modular_block(b, z0.real, z0.imag)


@numba.njit(cache=True)
def _modular_block(b, z0x, z0y):
    n = b.shape[0]
    out = np.empty(n)
    for i in range(n):
        zx, zy = _basis_to_z(b[i, 0, 0], b[i, 0, 1], b[i, 1, 0], b[i, 1, 1])
        zx, zy, _ = _to_fd(zx, zy)
        out[i] = _quotient_dist(z0x, z0y, zx, zy)
    return out


def burned_in_samples(m: GeneratorMeasure, seed: int, count: int, burn_in: int = 1000, traj0: int = 0) -> np.ndarray:
    """(count, d, d) LLL-reduced bases after ``burn_in`` steps from random starts (d >= 3).

    These are exactly the starting states of :func:`observe_lattice` for the
    same seed and trajectory indices.
    """
    table, K = product_table(m)
    out, status = _burned_block(table, K, m.elements, m.cumulative(), np.uint64(rng.check_seed(seed)),
                                int(traj0), int(count), int(burn_in))
    if status == ERR_REDUCTION:
        raise ReductionDiverged(f"reduction failed during burn-in (seed {seed})")
    if status == ERR_DET:
        raise DetCollapsed(f"determinant collapsed during burn-in (seed {seed})")
    return out


@numba.njit(cache=True, nogil=True)
def _burned_block(table, K, elems, cumw, seed, traj0, count, burn_in):
    d = elems.shape[1]
    out = np.empty((count, d, d))
    B = np.empty((d, d))
    state = np.zeros(3)
    for t in range(count):
        _burned_start(B, table, K, elems, cumw, seed, traj0 + t, burn_in, 0.99, 64, state)
        out[t] = B
    return out, int(state[2])


def shortest_deltas(bases: np.ndarray) -> np.ndarray:
    """-log shortest length for a stack of row bases (any d <= 8)."""
    bases = np.asarray(bases, dtype=float)
    if bases.shape[1] == 2:
        return _gauss_deltas(bases)
    return _enum_deltas(bases)


@numba.njit(cache=True)
def _gauss_deltas(b):
    n = b.shape[0]
    out = np.empty(n)
    for i in range(n):
        a, bb, c, e, _ = _gauss2(b[i, 0, 0], b[i, 0, 1], b[i, 1, 0], b[i, 1, 1])
        out[i] = -0.5 * math.log(a * a + bb * bb)
    return out


@numba.njit(cache=True)
def _enum_deltas(b):
    n = b.shape[0]
    out = np.empty(n)
    for i in range(n):
        B = b[i].copy()
        _lll(B, 0.99)
        sq, _ = _svp_enum(B)
        out[i] = -0.5 * math.log(sq)
    return out


def step_choices(m: GeneratorMeasure, sp: SeedPlan, n: int) -> np.ndarray:
    return choice_indices(m, sp, 1, n)
