"""Extreme-value harness: scaling sequences, maxima schedules, empirical
CDFs of maxima and the closed-form Gumbel-type limit curves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import EmptySample, MissingFit, StreamExhausted


# ---------------------------------------------------------------- constants

def gamma_half_integer(x: float) -> float:
    """Gamma(x) for x a positive multiple of 1/2, by recurrence."""
    twice = round(2 * x)
    if twice <= 0 or abs(2 * x - twice) > 1e-12:
        raise ValueError(f"x must be a positive multiple of 1/2, got {x}")
    if twice % 2 == 0:
        g, y = 1.0, 1.0  # Gamma(1)
    else:
        g, y = math.sqrt(math.pi), 0.5  # Gamma(1/2)
    while y < x - 1e-12:
        g *= y
        y += 1.0
    return g


def ball_volume(d: int) -> float:
    """Volume of the unit ball in R^d."""
    if d < 1:
        raise ValueError("d must be >= 1")
    return math.pi ** (d / 2) / gamma_half_integer(d / 2 + 1)


def zeta(s: int, terms: int = 2000) -> float:
    """Riemann zeta at an integer s >= 2.

    Direct partial sum plus an Euler-Maclaurin tail; the truncation error is
    O(terms**-(s+3)), far below 1e-12 at the default.
    """
    if s < 2:
        raise ValueError(f"zeta({s}) diverges")
    n = terms
    head = math.fsum(k ** -s for k in range(1, n))
    tail = n ** (1 - s) / (s - 1) + 0.5 * n ** -s + s * n ** (-s - 1) / 12.0
    return head + tail


def ball_volume_and_w(d: int) -> tuple[float, float | None]:
    """(V_d, w) with w = V_d / (2 zeta(d)); w is None for d = 1."""
    if not 1 <= d <= 8:
        raise ValueError(f"1 <= d <= 8 required, got {d}")
    v = ball_volume(d)
    if d == 1:
        return v, None
    return v, v / (2.0 * zeta(d))


# ----------------------------------------------------------------- scaling

@dataclass(frozen=True)
class ScalingSequence:
    r: float
    k: float

    def __post_init__(self):
        if not self.k > 0:
            raise ValueError("tail exponent k must be positive")

    def u(self, n) -> np.ndarray | float:
        return scaling_u(self, n)


def scaling_u(s: ScalingSequence, n):
    """u_n = r + log(n) / k."""
    n_arr = np.asarray(n, dtype=float)
    if np.any(n_arr < 1):
        raise ValueError("n must be >= 1")
    out = s.r + np.log(n_arr) / s.k
    return float(out) if np.ndim(out) == 0 else out


# ----------------------------------------------------------------- schedules

@dataclass(frozen=True)
class MaxSchedule:
    """Which walk indices enter a maximum.

    full: 0..n-1.  sparse: 0, a, ..., a(n-1).  gap: m_j = j**power for
    alpha_n <= j < beta_n with alpha_n = alpha_mult*n, beta_n = beta_mult*n.
    """

    kind: str = "full"
    a: int = 1
    power: int = 2
    alpha_mult: int = 1
    beta_mult: int = 2

    def __post_init__(self):
        if self.kind not in ("full", "sparse", "gap"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.kind == "sparse" and self.a < 1:
            raise ValueError("sparsity a must be >= 1")
        if self.kind == "gap":
            if self.power < 2:
                raise ValueError("gap schedule needs m_{j+1} - m_j strictly increasing (power >= 2)")
            if not 1 <= self.alpha_mult < self.beta_mult:
                raise ValueError("gap schedule needs 1 <= alpha_mult < beta_mult")

    def m(self, j):
        return np.asarray(j, dtype=np.int64) ** self.power

    def window(self, n: int) -> tuple[int, int]:
        return self.alpha_mult * n, self.beta_mult * n

    def effective_n(self, n: int) -> int:
        """The count N used in u_n: n for full/sparse, beta_n - alpha_n for gap."""
        if self.kind == "gap":
            lo, hi = self.window(n)
            return hi - lo
        return n

    def indices(self, n: int) -> np.ndarray:
        if n < 1:
            raise ValueError("n must be >= 1")
        if self.kind == "full":
            return np.arange(n, dtype=np.int64)
        if self.kind == "sparse":
            return self.a * np.arange(n, dtype=np.int64)
        lo, hi = self.window(n)
        return self.m(np.arange(lo, hi))

    def describe(self) -> str:
        if self.kind == "full":
            return "full"
        if self.kind == "sparse":
            return f"sparse(a={self.a})"
        return f"gap(m_j=j^{self.power}, alpha_n={self.alpha_mult}n, beta_n={self.beta_mult}n)"


@dataclass
class ObservationPlan:
    """Union of the walk times needed for a set of checkpoints.

    ``columns[c]`` indexes into ``times`` and lists the observations whose
    maximum is the value at checkpoint ``c``.
    """

    times: np.ndarray
    columns: list[np.ndarray] = field(default_factory=list)
    prefix: bool = False

    @classmethod
    def build(cls, sched: MaxSchedule, checkpoints: Sequence[int]) -> "ObservationPlan":
        cps = [int(c) for c in checkpoints]
        if not cps:
            raise ValueError("at least one checkpoint is required")
        per = [sched.indices(c) for c in cps]
        times = np.unique(np.concatenate(per))
        cols = [np.searchsorted(times, p) for p in per]
        return cls(times=times, columns=cols, prefix=sched.kind != "gap")

    def maxima(self, obs: np.ndarray) -> np.ndarray:
        """Maxima per checkpoint from observed values, shape (..., n_times)."""
        if self.prefix:
            run = np.maximum.accumulate(obs, axis=-1)
            return np.stack([run[..., c[-1]] for c in self.columns], axis=-1)
        return np.stack([obs[..., c].max(axis=-1) for c in self.columns], axis=-1)


@dataclass
class MaxSeries:
    checkpoints: np.ndarray
    values: np.ndarray
    kind: str = "full"


def running_maxima(deltas, sched: MaxSchedule, checkpoints: Sequence[int]) -> MaxSeries:
    """Maxima of a single Delta stream at each checkpoint."""
    d = np.asarray(deltas, dtype=float)
    plan = ObservationPlan.build(sched, checkpoints)
    if plan.times[-1] >= d.size:
        raise StreamExhausted(
            f"schedule {sched.describe()} needs index {int(plan.times[-1])}, stream has {d.size} values"
        )
    vals = plan.maxima(d[plan.times])
    return MaxSeries(np.asarray(checkpoints, dtype=np.int64), vals, sched.kind)


def empirical_cdf(samples, thresholds) -> tuple[np.ndarray, np.ndarray]:
    """Fraction of samples <= each threshold, with binomial standard errors."""
    s = np.sort(np.asarray(samples, dtype=float).ravel())
    if s.size == 0:
        raise EmptySample("no samples")
    t = np.atleast_1d(np.asarray(thresholds, dtype=float))
    p = np.searchsorted(s, t, side="right") / s.size
    return p, np.sqrt(p * (1.0 - p) / s.size)


# -------------------------------------------------------------- limit curves

CURVE_KINDS = (
    "torus_exact",
    "torus_tail",
    "lattice_lower",
    "lattice_upper",
    "gap_exact",
    "excursion_lower",
    "excursion_upper",
)


def w_of_a(a: int, v1: float, v2: float, c0: float, lam: float) -> float:
    """Sparse-walk constant w(a) = v1 - lam^a/(1-lam^a) c0 v2, so w(a) -> v1."""
    la = lam ** a
    return v1 - la / (1.0 - la) * c0 * v2


def w_of_a_displayed(a: int, w: float, c0: float, lam: float) -> float:
    """The literal form lam^a/(1-lam^a) c0 w - w (opposite sign to :func:`w_of_a`)."""
    la = lam ** a
    return la / (1.0 - la) * c0 * w - w


def theta(a: int, v1: float, v2: float, c0: float, lam: float) -> float:
    return -w_of_a(a, v1, v2, c0, lam)


@dataclass(frozen=True)
class LimitCurve:
    """A Gumbel-type curve r -> exp(-c e^{-kr}).

    params by kind::

        torus_exact      d                 exp(-e^{-dr} / V_d)
        torus_tail       d                 exp(-V_d e^{-dr})
        lattice_lower    d, [w]            exp(-w e^{-dr})
        lattice_upper    d, a, lam, c0, [v1, v2]   exp(theta e^{-dr})
        gap_exact        k, v1             exp(-v1 e^{-kr})
        excursion_lower  k, v2             exp(-v2 e^{-kr})
        excursion_upper  k, a, lam, c0, v1, v2

    w, v1, v2 default to V_d / (2 zeta(d)) for the lattice kinds.  Upper
    curves are clipped to 1 when theta >= 0 (the bound is then trivial).
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in CURVE_KINDS:
            raise ValueError(f"unknown curve kind {self.kind!r}")

    def rate(self) -> tuple[float, float]:
        """(c, k) such that the curve is exp(-c e^{-kr})."""
        p = self.params
        if self.kind in ("torus_exact", "torus_tail"):
            d = int(p["d"])
            vd = ball_volume(d)
            return (1.0 / vd if self.kind == "torus_exact" else vd), float(d)
        if self.kind in ("lattice_lower", "lattice_upper"):
            d = int(p["d"])
            w = p.get("w")
            if w is None:
                w = ball_volume_and_w(d)[1]
            if self.kind == "lattice_lower":
                return float(w), float(d)
            self._need_fit()
            v1 = p.get("v1", w)
            v2 = p.get("v2", w)
            return w_of_a(int(p.get("a", 1)), v1, v2, p["c0"], p["lam"]), float(d)
        if self.kind == "gap_exact":
            return float(p["v1"]), float(p["k"])
        if self.kind == "excursion_lower":
            return float(p["v2"]), float(p["k"])
        self._need_fit()
        return w_of_a(int(p.get("a", 1)), p["v1"], p["v2"], p["c0"], p["lam"]), float(p["k"])

    def _need_fit(self):
        if self.params.get("lam") is None or self.params.get("c0") is None:
            raise MissingFit(f"{self.kind} needs fitted lam and c0")

    def __call__(self, r):
        return limit_curve(self, r)


def limit_curve(c: LimitCurve, r):
    rate, k = c.rate()
    r_arr = np.asarray(r, dtype=float)
    val = np.exp(-rate * np.exp(-k * r_arr))
    if c.kind in ("lattice_upper", "excursion_upper"):
        val = np.minimum(val, 1.0)
    return float(val) if val.ndim == 0 else val
