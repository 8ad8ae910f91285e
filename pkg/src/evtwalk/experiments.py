"""Experiment configuration, block-parallel execution and result tables.

Every experiment is a function of its config alone: trajectories are split
into fixed blocks by index, blocks may run on any number of threads, and the
per-block results are merged in block order, so the tables do not depend on
the worker count.
"""

from __future__ import annotations

import configparser
import csv
import dataclasses
import io
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from . import diagnostics as diag
from . import lattices, torus
from .errors import ConfigError, EmptySample, EvtWalkError, MeasureError, NoDecayResolved
from .evt import (
    LimitCurve,
    MaxSchedule,
    ObservationPlan,
    ScalingSequence,
    ball_volume_and_w,
    empirical_cdf,
    scaling_u,
    w_of_a,
    w_of_a_displayed,
)
from .walkcore import GeneratorMeasure, default_measure, validate_measure

MODES = ("torus-evt", "lattice-evt", "excursion-evt", "tail", "dprime", "corr", "recurrence", "loglaw")
SEED_ENV = "EVTWALK_SEED"


# ------------------------------------------------------------------- parsing

def parse_matrices(text: str) -> np.ndarray:
    """'2,1;1,1 | 1,1;1,2' -> array of shape (2, 2, 2). Rows split by ';'."""
    mats = []
    for chunk in text.split("|"):
        rows = [r for r in chunk.strip().split(";") if r.strip()]
        mats.append([[float(v) for v in r.split(",")] for r in rows])
    arr = np.array(mats, dtype=float)
    if arr.ndim != 3 or arr.shape[1] != arr.shape[2]:
        raise ValueError(f"matrices must be square and share one size: {text!r}")
    return arr


def format_matrices(mats) -> str:
    return " | ".join(";".join(",".join(_num(v) for v in row) for row in m) for m in np.asarray(mats))


def _num(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def _floats(text: str) -> list[float]:
    return [float(v) for v in str(text).replace(" ", "").split(",") if v != ""]


def _ints(text: str) -> list[int]:
    return [int(float(v)) for v in str(text).replace(" ", "").split(",") if v != ""]


def _opt(parse):
    def f(text):
        if text is None or str(text).strip().lower() in ("", "none", "auto"):
            return None
        return parse(text)
    return f


def _int(text) -> int:
    v = float(text)
    if not v.is_integer():
        raise ValueError(f"not an integer: {text!r}")
    return int(v)


# ------------------------------------------------------------------- config

@dataclass
class ExperimentConfig:
    mode: str = "torus-evt"
    space: str | None = None  # torus | lattice; implied by the evt modes
    d: int = 2
    generators: str | None = None
    weights: list[float] | None = None
    n: int | None = None
    trajectories: int | None = None
    r_grid: list[float] = field(default_factory=lambda: [-1.0, -0.5, 0.0, 0.5, 1.0])
    schedule: str = "full"
    a: int = 1
    gap_power: int = 2
    alpha: int = 1
    beta: int = 2
    seed: int = 1
    bits: int = 64
    burn_in: int = 1000
    observable: str | None = None  # shortest | modular
    target: str = "0,1"  # base point z0 = x + iy of the excursion observable
    k: float | None = None  # tail exponent; default d, fitted for the modular observable
    tail_samples: int = 400000
    samples: int = 10**6
    z_grid: list[float] | None = None
    q_list: list[int] = field(default_factory=lambda: [2, 4, 8, 16])
    r: float = 0.0
    u: float | None = None
    max_lag: int = 64
    steps: list[int] = field(default_factory=lambda: [1, 2, 3, 5, 10, 20, 30])
    scales: list[float] = field(default_factory=lambda: [5.0, 10.0, 20.0])
    per_decade: int = 4
    lam: float | None = None
    c0: float | None = None
    block: int = 500
    workers: int = 1
    output_dir: str | None = None

    # workers, block and output_dir do not change any output byte
    NON_RESULT_KEYS = ("workers", "block", "output_dir")

    @classmethod
    def parsers(cls) -> dict[str, Callable[[str], Any]]:
        return {
            "mode": str, "space": _opt(str), "d": _int, "generators": _opt(str),
            "weights": _opt(_floats), "n": _opt(_int), "trajectories": _opt(_int),
            "r_grid": _floats, "schedule": str, "a": _int, "gap_power": _int, "alpha": _int,
            "beta": _int, "seed": _int, "bits": _int, "burn_in": _int, "observable": _opt(str),
            "target": str, "k": _opt(float), "tail_samples": _int, "samples": _int,
            "z_grid": _opt(_floats), "q_list": _ints, "r": float, "u": _opt(float),
            "max_lag": _int, "steps": _ints, "scales": _floats, "per_decade": _int,
            "lam": _opt(float), "c0": _opt(float), "block": _int, "workers": _int,
            "output_dir": _opt(str),
        }

    @classmethod
    def from_sources(cls, file_values: dict[str, str] | None = None, cli_values: dict[str, str] | None = None,
                     env: dict[str, str] | None = None) -> "ExperimentConfig":
        """Merge defaults < file < command line, then apply EVTWALK_SEED."""
        parsers = cls.parsers()
        merged: dict[str, str] = {}
        for src in (file_values or {}, cli_values or {}):
            for key, val in src.items():
                k = key.strip().replace("-", "_")
                if k not in parsers:
                    raise ConfigError(f"unknown config key {key!r}")
                merged[k] = val
        env = os.environ if env is None else env
        if env.get(SEED_ENV):
            merged["seed"] = env[SEED_ENV]
        kwargs = {}
        for k, v in merged.items():
            try:
                kwargs[k] = parsers[k](v)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {k}: {v!r} ({exc})") from None
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    # ------------------------------------------------------------ derived
    def resolved_space(self) -> str:
        if self.mode == "torus-evt" or self.mode == "recurrence":
            return "torus"
        if self.mode in ("lattice-evt", "excursion-evt"):
            return "lattice"
        return self.space or "torus"

    def resolved_observable(self) -> str | None:
        if self.resolved_space() == "torus":
            return None
        if self.mode == "excursion-evt":
            return "modular"
        return self.observable or "shortest"

    def horizon(self) -> int:
        if self.n is not None:
            return self.n
        return {"loglaw": 10**6, "lattice-evt": 2048}.get(self.mode, 4096)

    def n_traj(self) -> int:
        if self.trajectories is not None:
            return self.trajectories
        return {"loglaw": 64, "recurrence": 10**5}.get(self.mode, 20000)

    def measure(self) -> GeneratorMeasure:
        space = self.resolved_space()
        if self.generators is None:
            m = default_measure(space, self.d)
        else:
            el = parse_matrices(self.generators)
            w = self.weights if self.weights is not None else [1.0 / len(el)] * len(el)
            m = GeneratorMeasure(el, np.asarray(w, dtype=float))
        if self.generators is None and self.weights is not None:
            m = GeneratorMeasure(m.elements, np.asarray(self.weights, dtype=float))
        return validate_measure(m, space)

    def schedule_obj(self) -> MaxSchedule:
        return MaxSchedule(self.schedule, self.a, self.gap_power, self.alpha, self.beta)

    def target_z(self) -> complex:
        x, y = _floats(self.target)
        return complex(x, y)

    def validate(self):
        try:
            self._validate()
        except ConfigError:
            raise
        except (ValueError, MeasureError, TypeError) as exc:
            raise ConfigError(str(exc)) from None

    def _validate(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {', '.join(MODES)}")
        if self.space not in (None, "torus", "lattice"):
            raise ConfigError(f"space must be torus or lattice, got {self.space!r}")
        space = self.resolved_space()
        if space == "torus" and self.d not in (1, 2, 3, 4, 5, 6, 7, 8):
            raise ConfigError("torus dimension must be 1..8")
        if space == "lattice" and not 2 <= self.d <= 8:
            raise ConfigError("lattice dimension must be 2..8")
        obs = self.resolved_observable()
        if obs not in (None, "shortest", "modular"):
            raise ConfigError(f"unknown observable {obs!r}")
        if obs == "modular" and self.d != 2:
            raise ConfigError("the modular-surface observable needs d = 2")
        if self.horizon() < 2 or self.n_traj() < 1:
            raise ConfigError("n must be >= 2 and trajectories >= 1")
        if not 1 <= self.bits <= 64:
            raise ConfigError("bits must be in 1..64")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.burn_in < 1:
            raise ConfigError("burn_in must be >= 1")
        if self.k is not None and not self.k > 0:
            raise ConfigError("k must be positive")
        if self.block < 1 or self.workers < 1:
            raise ConfigError("block and workers must be >= 1")
        if not self.r_grid:
            raise ConfigError("r_grid is empty")
        if self.mode == "dprime" and (max(self.q_list) > self.horizon() or min(self.q_list) < 1):
            raise ConfigError("q values must lie in 1..n")
        if self.mode == "corr" and not 10 <= self.max_lag < self.horizon():
            raise ConfigError("max_lag must be in [10, n)")
        if self.mode == "recurrence" and (min(self.steps) < 1 or min(self.scales) <= 0):
            raise ConfigError("recurrence steps must be >= 1 and scales > 0")
        self.schedule_obj()
        self.target_z()
        if obs == "modular":
            lattices.modular_point(self.target_z())
        self.measure()

    def as_items(self) -> list[tuple[str, str]]:
        out = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, list):
                v = ",".join(_num(x) for x in v)
            out.append((f.name, "none" if v is None else str(v)))
        return out


def read_config_file(path: str | os.PathLike) -> dict[str, str]:
    """Flat key=value file; '#' starts a comment."""
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"), inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    try:
        parser.read_string("[config]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config file {path}: {exc}") from None
    return dict(parser["config"])


# ------------------------------------------------------------------ results

@dataclass
class ResultTable:
    name: str
    columns: dict[str, np.ndarray]

    def __post_init__(self):
        lens = {len(v) for v in self.columns.values()}
        if len(lens) > 1:
            raise ValueError(f"table {self.name}: columns differ in length {lens}")

    @property
    def n_rows(self) -> int:
        return len(next(iter(self.columns.values()))) if self.columns else 0

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(list(self.columns))
        cols = list(self.columns.values())
        for i in range(self.n_rows):
            w.writerow([_fmt(c[i]) for c in cols])
        return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, (str, np.str_)):
        return str(v)
    if isinstance(v, (int, np.integer, bool, np.bool_)):
        return str(int(v))
    f = float(v)
    if math.isnan(f):
        return "nan"
    if math.isinf(f):
        return "inf" if f > 0 else "-inf"
    return format(f, ".17g")


@dataclass
class ResultSet:
    tables: list[ResultTable]
    meta: dict[str, str]

    def table(self, name: str) -> ResultTable:
        for t in self.tables:
            if t.name == name:
                return t
        raise KeyError(name)


# --------------------------------------------------------------- execution

def map_blocks(fn: Callable[[int, int], Any], total: int, block: int, workers: int) -> list:
    """Run fn(traj0, count) over fixed trajectory blocks; results in block order."""
    starts = list(range(0, total, block))
    args = [(s, min(block, total - s)) for s in starts]
    if workers <= 1 or len(args) == 1:
        return [fn(*a) for a in args]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        futures = [ex.submit(fn, *a) for a in args]
        return [f.result() for f in futures]


class _Runner:
    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.m = cfg.measure()
        self.space = cfg.resolved_space()
        self.obs = cfg.resolved_observable()
        self.meta: dict[str, str] = {}
        self.drift = 0.0
        self.K_used: set[int] = set()

    # -- observation of Delta ------------------------------------------------
    def observe(self, traj0: int, count: int, times, window: bool = False, include_start: bool = True,
                skip: bool = False) -> np.ndarray:
        c = self.cfg
        if self.space == "torus":
            return torus.observe_deltas(self.m, c.seed, traj0, count, times, c.bits, torus.TARGET_RANDOM,
                                        window, include_start)
        o = lattices.observe_lattice(self.m, c.seed, traj0, count, times, self.obs, c.target_z(),
                                     skip_to_first=skip, burn_in=c.burn_in, window=window,
                                     include_start=include_start)
        self.drift = max(self.drift, o.max_det_drift)
        # window maxima need every step, so they walk one generator at a time
        self.K_used.add(1 if window else lattices.product_table(self.m)[1])
        return o.deltas

    def blocks(self, fn, total=None):
        c = self.cfg
        return map_blocks(fn, c.n_traj() if total is None else total, c.block, c.workers)

    def start_note(self) -> str:
        if self.space == "torus":
            return f"uniform {self.cfg.bits}-bit grid point, independent uniform target per trajectory"
        if self.cfg.d == 2:
            return "exact Haar sample of the lattice (fundamental-domain rejection + uniform rotation)"
        return (f"random Gaussian basis followed by {self.cfg.burn_in} walk steps; approximates Haar, "
                "residual bias not corrected")

    # -- invariant samples ---------------------------------------------------
    def invariant_samples(self, count: int) -> np.ndarray:
        c = self.cfg
        if self.space == "torus":
            parts = self.blocks(lambda t0, k: _uniform_block(c, t0, k), count)
        elif c.d == 2 and self.obs == "modular":
            z0 = c.target_z()
            parts = self.blocks(lambda t0, k: lattices.haar_modular_deltas(c.seed, k, z0, t0), count)
        elif c.d == 2:
            parts = self.blocks(lambda t0, k: lattices.shortest_deltas(lattices.haar_samples_2d(c.seed, k, t0)), count)
        else:
            parts = self.blocks(
                lambda t0, k: lattices.shortest_deltas(lattices.burned_in_samples(self.m, c.seed, k, c.burn_in, t0)),
                count,
            )
        return np.concatenate(parts)

    def tail_exponent(self) -> tuple[float, diag.TailFit | None]:
        """k for u_n: given, d for the shortest-vector / torus observables, else fitted."""
        c = self.cfg
        if c.k is not None:
            return c.k, None
        if self.obs == "modular":
            fit = self.fit_tail(self.invariant_samples(c.tail_samples), None)
            return fit.k_hat, fit
        return float(c.d), None

    def fit_tail(self, samples, z_grid) -> diag.TailFit:
        if z_grid is None:
            z_grid = auto_z_grid(samples)
        return diag.tail_estimate_and_fit(samples, z_grid)


def _uniform_block(c: ExperimentConfig, traj0: int, count: int) -> np.ndarray:
    return torus.uniform_deltas(c.seed, count, c.d, c.bits, traj0)


def auto_z_grid(samples, points: int = 12, upper_tail: float = 0.05, top_count: int = 200) -> np.ndarray:
    """Grid from the 95% quantile up to the level with ``top_count`` exceedances."""
    s = np.sort(np.asarray(samples, dtype=float))
    if s.size < 2 * top_count:
        raise EmptySample(f"{s.size} samples are too few for an automatic z grid")
    lo = s[int((1 - upper_tail) * s.size)]
    hi = s[s.size - top_count]
    return np.linspace(lo, hi, points)


# -------------------------------------------------------------------- modes

def _evt(run: _Runner) -> ResultSet:
    c = run.cfg
    n = c.horizon()
    sched = c.schedule_obj()
    k, fit = run.tail_exponent()
    N = sched.effective_n(n)
    u = np.asarray(scaling_u(ScalingSequence(0.0, k), N)) + np.asarray(c.r_grid, dtype=float)
    u = np.atleast_1d(u)

    if sched.kind == "full":
        maxima = np.concatenate(run.blocks(lambda t0, cnt: run.observe(t0, cnt, [n - 1], window=True)[:, 0]))
    else:
        plan = ObservationPlan.build(sched, [n])
        # a stationary start makes starting the walk at the first observed time exact in law
        skip = run.space == "lattice" and plan.times[0] > 0
        maxima = np.concatenate(run.blocks(
            lambda t0, cnt: plan.maxima(run.observe(t0, cnt, plan.times, skip=skip))[:, 0]
        ))
    F, se = empirical_cdf(maxima, u)
    r = np.asarray(c.r_grid, dtype=float)
    cols: dict[str, np.ndarray] = {"r": r, "u_n": u, "F_hat": F, "stderr": se}
    meta = {"k_used": _fmt(k), "N_effective": str(N), "schedule": sched.describe(),
            "exact_hits": str(int(np.isinf(maxima).sum()))}

    if c.mode == "torus-evt":
        d = c.d
        cols["F_limit"] = LimitCurve("torus_exact", {"d": d})(r)
        cols["F_tail"] = LimitCurve("torus_tail", {"d": d})(r)
        meta["curve_F_limit"] = "torus_exact exp(-e^{-dr}/V_d)"
        meta["curve_F_tail"] = "torus_tail exp(-V_d e^{-dr}) from n P(Delta > u_n) = V_d e^{-dr}"
    elif c.mode == "lattice-evt":
        d = c.d
        V, w = ball_volume_and_w(d)
        kind = "gap_exact" if sched.kind == "gap" else "lattice_lower"
        curve = LimitCurve("gap_exact", {"k": d, "v1": w}) if kind == "gap_exact" else LimitCurve("lattice_lower", {"d": d})
        cols["F_limit"] = curve(r)
        meta["curve_F_limit"] = f"{kind} with w = V_d/(2 zeta(d)) = {w!r}"
        if c.lam is not None and c.c0 is not None:
            a = sched.a if sched.kind == "sparse" else 1
            up = LimitCurve("lattice_upper", {"d": d, "a": a, "lam": c.lam, "c0": c.c0})
            cols["F_upper"] = up(r)
            meta["w_of_a"] = _fmt(w_of_a(a, w, w, c.c0, c.lam))
            meta["w_of_a_displayed"] = _fmt(w_of_a_displayed(a, w, c.c0, c.lam))
            meta["curve_F_upper"] = "lattice_upper exp(theta e^{-dr}), theta = -w(a); qualitative (fitted lam, c0)"
    else:
        fit = fit if fit is not None else run.fit_tail(run.invariant_samples(c.tail_samples), c.z_grid)
        cols["F_fit"] = np.exp(-fit.v_hat * np.exp(-k * r))
        meta.update({"k_hat": _fmt(fit.k_hat), "k_se": _fmt(fit.k_se), "v_hat": _fmt(fit.v_hat),
                     "curve_F_fit": "exp(-v_hat e^{-k r}) from the fitted tail; reference, not a theorem"})
    run.meta.update(meta)
    tables = [ResultTable("evt_cdf", cols)]
    if fit is not None:
        tables.append(_tail_table(fit))
    return ResultSet(tables, {})


def _tail_table(fit: diag.TailFit) -> ResultTable:
    return ResultTable("tail_fit", {
        "k_hat": [fit.k_hat], "k_se": [fit.k_se], "v_hat": [fit.v_hat], "v1_hat": [fit.v1_hat],
        "v2_hat": [fit.v2_hat], "z_lo": [fit.z_window[0]], "z_hi": [fit.z_window[1]], "r2": [fit.r2],
        "n_samples": [fit.n_samples],
    })


def _tail(run: _Runner) -> ResultSet:
    c = run.cfg
    samples = run.invariant_samples(c.samples)
    fit = run.fit_tail(samples, c.z_grid)
    z = fit.z
    cols = {"z": z, "phi_hat": fit.phi, "count": fit.counts,
            "stderr": np.sqrt(fit.phi * (1 - fit.phi) / fit.n_samples)}
    V, w = ball_volume_and_w(c.d)
    if run.space == "torus":
        cols["phi_exact"] = V * np.exp(-c.d * z)
        run.meta["reference"] = "V_d e^{-dz}"
    elif run.obs == "shortest":
        cols["phi_ref"] = w * np.exp(-c.d * z)
        run.meta["reference"] = "w e^{-dz}, w = V_d/(2 zeta(d))"
    run.meta["sampler"] = run.start_note()
    return ResultSet([_tail_table(fit), ResultTable("tail_points", cols)], {})


def _joint(run: _Runner, u: float, max_lag: int) -> diag.JointExceedances:
    n = run.cfg.horizon()
    times = np.arange(n)
    parts = run.blocks(lambda t0, cnt: diag.joint_exceedances(run.observe(t0, cnt, times), u, max_lag))
    total = parts[0]
    for p in parts[1:]:
        total = total + p
    return total


def _u_for_pairs(run: _Runner) -> float:
    c = run.cfg
    if c.u is not None:
        return c.u
    k, _ = run.tail_exponent()
    return c.r + math.log(c.horizon()) / k


def _dprime(run: _Runner) -> ResultSet:
    c = run.cfg
    n = c.horizon()
    u = _u_for_pairs(run)
    je = _joint(run, u, n // min(c.q_list))
    rep = diag.dprime_sum(je, n, c.q_list)
    run.meta.update({"u": _fmt(u), "marginal": _fmt(je.marginal), "pairs": "all (i, i+j) in each trajectory",
                     "g_indep": "c^2/q with c = n * marginal"})
    return ResultSet([ResultTable("dprime", {
        "q": rep.q_values, "g_q": rep.g_q, "stderr": rep.g_se, "g_indep": rep.independent_prediction(),
    })], {})


def _corr(run: _Runner) -> ResultSet:
    c = run.cfg
    u = _u_for_pairs(run)
    je = _joint(run, u, c.max_lag)
    lags = np.arange(1, c.max_lag + 1)
    joint, jse = je.joint, je.joint_se
    p = je.marginal
    tables = [ResultTable("corr", {"lag": lags, "joint": joint, "stderr": jse, "covariance": joint - p * p})]
    try:
        est = diag.correlation_decay_fit(joint, p, jse, lags, je.marginal_se)
        tables.append(ResultTable("corr_fit", {
            "status": ["resolved"], "lambda_hat": [est.lambda_hat], "c0_hat": [est.c0_hat], "r2": [est.r2],
            "lags_used": [len(est.lags_used)],
        }))
    except NoDecayResolved as exc:
        tables.append(ResultTable("corr_fit", {
            "status": ["no_decay_resolved"], "lambda_hat": [float("nan")], "c0_hat": [float("nan")],
            "r2": [float("nan")], "lags_used": [0],
        }))
        run.meta["corr_note"] = str(exc)
    run.meta.update({"u": _fmt(u), "marginal": _fmt(p), "marginal_stderr": _fmt(je.marginal_se)})
    return ResultSet(tables, {})


def _recurrence(run: _Runner) -> ResultSet:
    c = run.cfg
    steps = sorted(set(c.steps))
    trials = c.n_traj()
    times = np.asarray(steps)

    def block(t0, cnt):
        d = torus.observe_deltas(run.m, c.seed, t0, cnt, times, c.bits, torus.TARGET_START)
        return np.array([[np.sum(d[:, j] > math.log(s)) for s in c.scales] for j in range(len(steps))])

    hits = sum(run.blocks(block, trials))
    V, _ = ball_volume_and_w(c.d)
    ii, ss, pp, ee, eq = [], [], [], [], []
    for j, i in enumerate(steps):
        for col, s in enumerate(c.scales):
            p = hits[j, col] / trials
            ii.append(i), ss.append(s), pp.append(p)
            ee.append(math.sqrt(p * (1 - p) / trials))
            eq.append(V * s ** (-c.d))
    return ResultSet([ResultTable("recurrence", {
        "i": ii, "s": ss, "p_hat": pp, "stderr": ee, "trials": [trials] * len(ii), "p_equidistributed": eq,
    })], {})


def _loglaw(run: _Runner) -> ResultSet:
    c = run.cfg
    n = c.horizon()
    cps = diag.loglaw_checkpoints(n, c.per_decade)
    k, fit = run.tail_exponent()
    wmax = np.concatenate(run.blocks(lambda t0, cnt: run.observe(t0, cnt, cps, window=True, include_start=False)))
    stat = diag.loglaw_from_window_max(wmax, cps)
    ntr = stat.shape[0]
    traj = np.repeat(np.arange(ntr), cps.size)
    ncol = np.tile(cps, ntr)
    tables = [
        ResultTable("loglaw", {"trajectory": traj, "n": ncol, "statistic": stat.ravel()}),
        ResultTable("loglaw_summary", {
            "n": cps, "median": np.median(stat, axis=0), "q10": np.quantile(stat, 0.1, axis=0),
            "q90": np.quantile(stat, 0.9, axis=0), "target": np.full(cps.size, 1.0 / k),
        }),
    ]
    if fit is not None:
        tables.append(_tail_table(fit))
    run.meta.update({"k_used": _fmt(k), "loglaw_target": _fmt(1.0 / k)})
    return ResultSet(tables, {})


_DISPATCH = {
    "torus-evt": _evt, "lattice-evt": _evt, "excursion-evt": _evt, "tail": _tail, "dprime": _dprime,
    "corr": _corr, "recurrence": _recurrence, "loglaw": _loglaw,
}


def run_experiment(cfg: ExperimentConfig) -> ResultSet:
    cfg.validate()
    t0 = time.perf_counter()
    run = _Runner(cfg)
    res = _DISPATCH[cfg.mode](run)
    meta = {"version": __version__}
    meta.update({k: v for k, v in cfg.as_items()})
    meta.update({
        "resolved_space": run.space, "resolved_observable": str(run.obs), "resolved_n": str(cfg.horizon()),
        "resolved_trajectories": str(cfg.n_traj()), "generators_resolved": format_matrices(run.m.elements),
        "weights_resolved": ",".join(_fmt(w) for w in run.m.weights), "start": run.start_note(),
    })
    if run.space == "lattice":
        meta["block_product_length"] = ",".join(str(k) for k in sorted(run.K_used)) or "none"
        meta["max_det_drift"] = _fmt(run.drift)
    meta.update(run.meta)
    meta["wall_time_s"] = f"{time.perf_counter() - t0:.3f}"
    return ResultSet(res.tables, meta)


# ------------------------------------------------------------------ output

def emit_results(results: ResultSet, out_dir: str | os.PathLike, force: bool = False) -> list[Path]:
    """Write one CSV per table plus meta.txt. Refuses a non-empty dir unless ``force``."""
    if not results.tables:
        raise EvtWalkError("no result tables to write")
    out = Path(out_dir)
    if out.exists() and any(out.iterdir()) and not force:
        raise FileExistsError(f"output directory {out} is not empty (use --force to overwrite)")
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for t in results.tables:
        p = out / f"{t.name}.csv"
        p.write_text(t.to_csv(), encoding="utf-8")
        written.append(p)
    p = out / "meta.txt"
    p.write_text("".join(f"{k}={v}\n" for k, v in results.meta.items()), encoding="utf-8")
    written.append(p)
    return written
