"""Estimators for the ingredients of the extreme-value arguments: tail
exponent fits, joint exceedances and the D' sums, correlation decay of the
exceedance indicator, recurrence probabilities and the log-law statistic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import InsufficientExceedances, InsufficientTrajectories, NoDecayResolved, StreamExhausted
from .torus import TARGET_START, observe_deltas
from .walkcore import GeneratorMeasure, validate_measure

MIN_WINDOW_COUNT = 30
MIN_TOP_COUNT = 100
MIN_TRAJECTORIES = 10**4


# ------------------------------------------------------------------ tail fit

@dataclass
class TailFit:
    k_hat: float
    k_se: float
    v_hat: float
    v1_hat: float
    v2_hat: float
    z_window: tuple[float, float]
    r2: float
    z: np.ndarray = field(repr=False, default=None)
    phi: np.ndarray = field(repr=False, default=None)
    counts: np.ndarray = field(repr=False, default=None)
    n_samples: int = 0


def _wls_line(x, y, w):
    """Weighted least squares y = a + b x. Returns (a, b, cov, r2)."""
    X = np.column_stack([np.ones_like(x), x])
    XtW = X.T * w
    cov = np.linalg.inv(XtW @ X)
    a, b = cov @ (XtW @ y)
    resid = y - (a + b * x)
    ybar = np.sum(w * y) / np.sum(w)
    ss_tot = np.sum(w * (y - ybar) ** 2)
    r2 = 1.0 - np.sum(w * resid**2) / ss_tot if ss_tot > 0 else 1.0
    return a, b, cov, r2


def tail_estimate_and_fit(samples, z_grid, min_samples: int = MIN_TRAJECTORIES) -> TailFit:
    """Fit Phi(z) = P(Delta >= z) ~ v e^{-k z} on a grid of z values.

    Grid points with fewer than 30 exceedances are dropped from the window;
    the highest point kept must still have at least 100 and at least five
    points must remain.  ln Phi_hat is regressed on z with inverse-variance
    weights N p / (1 - p).  v1_hat and v2_hat are the min and max of
    Phi_hat(z) e^{k_hat z} over the window.
    """
    s = np.sort(np.asarray(samples, dtype=float).ravel())
    n = s.size
    if n < min_samples:
        raise InsufficientExceedances(f"need at least {min_samples} samples, got {n}")
    z = np.sort(np.asarray(z_grid, dtype=float))
    counts = n - np.searchsorted(s, z, side="left")
    keep = counts >= MIN_WINDOW_COUNT
    if keep.sum() < 5:
        raise InsufficientExceedances(f"only {int(keep.sum())} grid points have >= {MIN_WINDOW_COUNT} exceedances")
    zk, ck = z[keep], counts[keep]
    if ck[-1] < MIN_TOP_COUNT:
        raise InsufficientExceedances(
            f"{int(ck[-1])} exceedances at z = {zk[-1]:.4g}; need >= {MIN_TOP_COUNT} at the top of the window"
        )
    p = ck / n
    w = n * p / np.maximum(1.0 - p, 1e-300)
    a, b, cov, r2 = _wls_line(zk, np.log(p), w)
    k_hat = -b
    if not k_hat > 0:
        raise InsufficientExceedances(f"fitted exponent {k_hat:.4g} is not positive; tail not resolved")
    env = p * np.exp(k_hat * zk)
    return TailFit(
        k_hat=float(k_hat), k_se=float(math.sqrt(cov[1, 1])), v_hat=float(math.exp(a)),
        v1_hat=float(env.min()), v2_hat=float(env.max()), z_window=(float(zk[0]), float(zk[-1])),
        r2=float(r2), z=zk, phi=p, counts=ck, n_samples=n,
    )


# --------------------------------------------------------- joint exceedances

@dataclass
class JointExceedances:
    """Counts of exceedances of u and of lag-j exceedance pairs.

    ``pair_hits[j-1]`` counts pairs (i, i+j) inside one trajectory with both
    Delta values above u; ``pair_total[j-1]`` counts all such pairs examined.
    Merging two estimates (``+``) adds counts, so the result does not depend on
    how trajectories were split among workers.
    """

    u: float
    hits: int
    total: int
    pair_hits: np.ndarray
    pair_total: np.ndarray
    n_traj: int

    def __add__(self, other: "JointExceedances") -> "JointExceedances":
        if self.u != other.u or self.pair_hits.shape != other.pair_hits.shape:
            raise ValueError("cannot merge estimates with different u or lag range")
        return JointExceedances(
            self.u, self.hits + other.hits, self.total + other.total,
            self.pair_hits + other.pair_hits, self.pair_total + other.pair_total,
            self.n_traj + other.n_traj,
        )

    @property
    def marginal(self) -> float:
        return self.hits / self.total

    @property
    def marginal_se(self) -> float:
        p = self.marginal
        return math.sqrt(p * (1 - p) / self.total)

    @property
    def joint(self) -> np.ndarray:
        return self.pair_hits / np.maximum(self.pair_total, 1)

    @property
    def joint_se(self) -> np.ndarray:
        p = self.joint
        # zero-count lags get the one-event resolution as their error scale
        p_eff = np.maximum(p, 1.0 / np.maximum(self.pair_total, 1))
        return np.sqrt(p_eff * (1 - p_eff) / np.maximum(self.pair_total, 1))


@numba.njit(cache=True)
def _lag_counts(deltas, u, max_lag, origin_only):
    n_traj, T = deltas.shape
    hits = 0
    ph = np.zeros(max_lag, dtype=np.int64)
    pos = np.empty(T, dtype=np.int64)
    for t in range(n_traj):
        k = 0
        for i in range(T):
            if deltas[t, i] > u:
                pos[k] = i
                k += 1
        hits += k
        for a in range(k):
            if origin_only and pos[a] != 0:
                break
            for b in range(a + 1, k):
                lag = pos[b] - pos[a]
                if lag > max_lag:
                    break
                ph[lag - 1] += 1
    return hits, ph


def joint_exceedances(deltas, u: float, max_lag: int, pairs: str = "all") -> JointExceedances:
    """Count exceedances of ``u`` in a (trajectories x times) Delta matrix.

    ``pairs='origin'`` uses only the pairs (0, j), exactly the definition of
    P(xi_0 > u, xi_j > u).  ``pairs='all'`` uses every pair (i, i+j) in the
    window, which estimates the same quantity under a stationary start with
    far smaller variance.
    """
    d = np.asarray(deltas, dtype=float)
    if d.ndim != 2:
        raise ValueError("deltas must be a (trajectories, times) matrix")
    n_traj, T = d.shape
    if not 1 <= max_lag < T:
        raise ValueError(f"max_lag must be in [1, {T - 1}]")
    if pairs not in ("all", "origin"):
        raise ValueError("pairs must be 'all' or 'origin'")
    origin = pairs == "origin"
    hits, ph = _lag_counts(d, float(u), int(max_lag), origin)
    lags = np.arange(1, max_lag + 1)
    per_traj = np.ones(max_lag, dtype=np.int64) if origin else (T - lags)
    if origin:
        hits = int((d[:, 0] > u).sum())
        total = n_traj
    else:
        total = n_traj * T
    return JointExceedances(float(u), int(hits), int(total), ph, per_traj * n_traj, n_traj)


@dataclass
class DPrimeReport:
    q_values: np.ndarray
    g_q: np.ndarray
    g_se: np.ndarray
    u: float
    n: int
    n_traj: int
    marginal: float

    def independent_prediction(self) -> np.ndarray:
        """c^2 / q with c = n P(xi > u): the value of g_q for independent xi."""
        c = self.n * self.marginal
        return c * c / self.q_values


def dprime_sum(paired: JointExceedances, n: int, q_list, min_traj: int = MIN_TRAJECTORIES) -> DPrimeReport:
    """g_q = n sum_{j=1}^{[n/q]} P_hat(xi_0 > u, xi_j > u) for each q."""
    if paired.n_traj < min_traj:
        raise InsufficientTrajectories(f"{paired.n_traj} trajectories, need >= {min_traj}")
    q = np.asarray(q_list, dtype=np.int64)
    if np.any(q < 1):
        raise ValueError("q must be >= 1")
    jmax = n // q
    if jmax.max() > paired.pair_hits.size:
        raise ValueError(f"lags up to {int(jmax.max())} needed, estimate has {paired.pair_hits.size}")
    p, se = paired.joint, paired.joint_se
    cp, cv = np.concatenate([[0.0], np.cumsum(p)]), np.concatenate([[0.0], np.cumsum(se**2)])
    g = n * cp[jmax]
    gse = n * np.sqrt(cv[jmax])
    return DPrimeReport(q, g, gse, paired.u, int(n), paired.n_traj, paired.marginal)


# --------------------------------------------------------- correlation decay

@dataclass
class SpectralGapEstimate:
    lambda_hat: float
    c0_hat: float
    r2: float
    lags_used: np.ndarray = field(repr=False, default=None)


def correlation_decay_fit(joint, marginal: float, joint_se=None, lags=None, marginal_se: float = 0.0,
                          n_sigma: float = 3.0) -> SpectralGapEstimate:
    """Fit |P(xi_0>u, xi_j>u) - p^2| ~ c0 lam^j p by log-linear regression.

    Only lags whose covariance exceeds ``n_sigma`` standard errors enter the
    fit.  When ``joint_se`` is omitted the inputs are treated as exact.
    Raises NoDecayResolved when fewer than three lags are resolved or the
    fitted rate is not in (0, 1).
    """
    joint = np.asarray(joint, dtype=float)
    j = np.arange(1, joint.size + 1) if lags is None else np.asarray(lags, dtype=float)
    if joint.size < 10:
        raise ValueError("need joint estimates at >= 10 lags")
    if not marginal > 0:
        raise NoDecayResolved("no exceedances at this u")
    cov = np.abs(joint - marginal**2)
    if joint_se is None:
        sig = np.zeros_like(joint)
        ok = cov > 0
    else:
        # error in p^2 from the marginal enters every lag
        sig = np.sqrt(np.asarray(joint_se, dtype=float) ** 2 + (2 * marginal * marginal_se) ** 2)
        ok = cov > n_sigma * sig
    if ok.sum() < 3:
        raise NoDecayResolved(f"only {int(ok.sum())} lags show correlation above {n_sigma:g} sigma; consistent with fast mixing")
    y = np.log(cov[ok] / marginal)
    if joint_se is None:
        w = np.ones(ok.sum())
    else:
        w = (cov[ok] / sig[ok]) ** 2
    a, b, _, r2 = _wls_line(j[ok], y, w)
    lam = math.exp(b)
    if not 0 < lam < 1:
        raise NoDecayResolved(f"fitted rate {lam:.4g} is not in (0, 1)")
    return SpectralGapEstimate(lam, math.exp(a), float(r2), j[ok])


# --------------------------------------------------------------- recurrence

@dataclass
class RecurrenceEstimate:
    i: int
    s: float
    p_hat: float
    se: float
    trials: int


def recurrence_grid(m: GeneratorMeasure, steps, scales, trials: int, seed: int, bits: int = 64,
                    traj0: int = 0) -> list[RecurrenceEstimate]:
    """P(d(X_i, X_0) < 1/s) for every i in ``steps`` and s in ``scales``.

    Each trial is one trajectory with a uniform start and its own generators;
    one run serves all (i, s) pairs.
    """
    m = validate_measure(m, "torus")
    steps = sorted(int(i) for i in steps)
    if steps[0] < 1:
        raise ValueError("E_i is defined for i >= 1")
    if trials < MIN_TRAJECTORIES:
        raise InsufficientTrajectories(f"need >= {MIN_TRAJECTORIES} trials, got {trials}")
    d = observe_deltas(m, seed, traj0, trials, steps, bits, TARGET_START)
    out = []
    for col, i in enumerate(steps):
        for s in scales:
            # d < 1/s  <=>  Delta > ln s
            p = float(np.mean(d[:, col] > math.log(s)))
            out.append(RecurrenceEstimate(i, float(s), p, math.sqrt(p * (1 - p) / trials), trials))
    return out


def recurrence_prob(m: GeneratorMeasure, i: int, s: float, N: int, seed: int = 0, bits: int = 64) -> RecurrenceEstimate:
    """Monte Carlo estimate of P(E_i), E_i = {d(L^i x, x) < 1/s}."""
    return recurrence_grid(m, [i], [s], N, seed, bits)[0]


# ------------------------------------------------------------------ log law

def loglaw_estimate(deltas, checkpoints) -> np.ndarray:
    """(max_{1<=m<=n} Delta_m) / ln n at each checkpoint n.

    ``deltas[m-1]`` is Delta_m, so the stream starts at m = 1.
    """
    d = np.asarray(deltas, dtype=float)
    cps = np.asarray(checkpoints, dtype=np.int64)
    if np.any(cps < 2):
        raise ValueError("checkpoints must be >= 2 (ln 1 = 0)")
    if cps.max() > d.size:
        raise StreamExhausted(f"checkpoint {int(cps.max())} beyond stream of length {d.size}")
    run = np.maximum.accumulate(d)
    return run[cps - 1] / np.log(cps)


def loglaw_from_window_max(wmax, checkpoints) -> np.ndarray:
    """Same statistic from per-window maxima (windows ending at the checkpoints)."""
    cps = np.asarray(checkpoints, dtype=np.int64)
    run = np.maximum.accumulate(np.asarray(wmax, dtype=float), axis=-1)
    return run / np.log(cps)


def loglaw_checkpoints(n_max: int, per_decade: int = 4, start: int = 10) -> np.ndarray:
    """Log-spaced checkpoints from ``start`` to ``n_max`` inclusive."""
    k = int(round(per_decade * math.log10(n_max / start)))
    cps = np.unique(np.rint(start * 10 ** (np.arange(k + 1) / per_decade)).astype(np.int64))
    cps = cps[cps <= n_max]
    if cps[-1] != n_max:
        cps = np.append(cps, n_max)
    return cps
