import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import special

from evtwalk.errors import EmptySample, MissingFit, StreamExhausted
from evtwalk.evt import (
    LimitCurve,
    MaxSchedule,
    ObservationPlan,
    ScalingSequence,
    ball_volume,
    ball_volume_and_w,
    empirical_cdf,
    limit_curve,
    running_maxima,
    scaling_u,
    theta,
    w_of_a,
    w_of_a_displayed,
    zeta,
)
from evtwalk.torus import uniform_deltas

W2 = 3 / math.pi
reals = st.floats(-5, 5, allow_nan=False)


def test_scaling_examples():
    assert scaling_u(ScalingSequence(0, 2), 100) == pytest.approx(math.log(10))
    for k in (0.5, 1, 2, 3):
        assert scaling_u(ScalingSequence(1, k), 1) == 1.0
    s = ScalingSequence(0.3, 2)
    for n in (10, 10**3, 10**6):
        assert n * math.exp(-2 * scaling_u(s, n)) == pytest.approx(math.exp(-0.6), rel=1e-12)
    with pytest.raises(ValueError):
        scaling_u(s, 0)
    with pytest.raises(ValueError):
        ScalingSequence(0, 0)


@given(reals, st.floats(0.1, 5), st.integers(1, 10**8))
def test_scaling_increasing(r, k, n):
    s = ScalingSequence(r, k)
    assert s.u(n + 1) > s.u(n)


def test_running_maxima_examples():
    assert list(running_maxima([1, 3, 2], MaxSchedule(), [1, 2, 3]).values) == [1, 3, 3]
    assert running_maxima([1, 3, 2, 7], MaxSchedule("sparse", a=2), [2]).values[0] == 2
    d = np.arange(20.0)
    d[4], d[9] = 100, 50
    g = MaxSchedule("gap", power=2, alpha_mult=2, beta_mult=4)
    # checkpoint n=1 gives the window 2 <= j < 4, indices 4 and 9
    np.testing.assert_array_equal(g.indices(1), [4, 9])
    assert running_maxima(d, g, [1]).values[0] == 100
    with pytest.raises(StreamExhausted):
        running_maxima([1, 2], MaxSchedule(), [3])


def test_schedule_validation():
    with pytest.raises(ValueError):
        MaxSchedule("sparse", a=0)
    with pytest.raises(ValueError):
        MaxSchedule("gap", power=1)
    with pytest.raises(ValueError):
        MaxSchedule("gap", alpha_mult=2, beta_mult=2)
    g = MaxSchedule("gap")
    assert g.effective_n(512) == 512
    assert np.all(np.diff(np.diff(g.indices(50))) > 0)


@given(st.lists(st.floats(-10, 10, allow_nan=False), min_size=1, max_size=60))
def test_full_maxima_non_decreasing(xs):
    cps = list(range(1, len(xs) + 1))
    v = running_maxima(xs, MaxSchedule(), cps).values
    assert np.all(np.diff(v) >= 0)
    assert v[-1] == max(xs)


@given(st.integers(0, 1000), st.sampled_from(["full", "sparse", "gap"]))
def test_observation_plan_matches_direct_max(seed, kind):
    sched = MaxSchedule(kind, a=3)
    cps = [3, 7, 12]
    rs = np.random.default_rng(seed)
    plan = ObservationPlan.build(sched, cps)
    obs = rs.normal(size=(4, plan.times.size))
    full = np.full((4, plan.times[-1] + 1), -np.inf)
    full[:, plan.times] = obs
    got = plan.maxima(obs)
    for c, n in enumerate(cps):
        np.testing.assert_array_equal(got[:, c], full[:, sched.indices(n)].max(axis=1))


def test_empirical_cdf_examples():
    p, _ = empirical_cdf([1, 2, 3], [2])
    assert p[0] == pytest.approx(2 / 3)
    p, se = empirical_cdf([1, 2, 3], [0, 10])
    assert list(p) == [0, 1] and list(se) == [0, 0]
    with pytest.raises(EmptySample):
        empirical_cdf([], [0])
    x = np.random.default_rng(3).exponential(size=10**4)
    p, se = empirical_cdf(x, [math.log(2)])
    assert abs(p[0] - 0.5) <= 4 * 0.005 and se[0] == pytest.approx(0.005, rel=0.01)


def test_limit_curve_examples():
    c = LimitCurve("torus_exact", {"d": 2})
    assert c(-0.5 * math.log(math.pi)) == pytest.approx(math.exp(-1), abs=1e-12)
    assert c(0) == pytest.approx(math.exp(-1 / math.pi), abs=1e-12)
    low = LimitCurve("lattice_lower", {"d": 2})
    assert low(0) == pytest.approx(0.38485, abs=2e-5)
    gap = LimitCurve("gap_exact", {"k": 2, "v1": W2})
    for r in np.linspace(-2, 2, 9):
        assert gap(r) == pytest.approx(low(r), abs=1e-15)
    assert LimitCurve("torus_tail", {"d": 2})(0) == pytest.approx(math.exp(-math.pi))
    np.testing.assert_allclose(limit_curve(c, [0.0, 0.0]), [c(0)] * 2)


def test_limit_curve_errors():
    with pytest.raises(ValueError):
        LimitCurve("gumbel", {})
    with pytest.raises(MissingFit):
        LimitCurve("lattice_upper", {"d": 2, "a": 4})(0)
    with pytest.raises(MissingFit):
        LimitCurve("excursion_upper", {"k": 1, "a": 4, "v1": 1, "v2": 1, "lam": 0.5})(0)


def test_ball_volume_and_w():
    v, w = ball_volume_and_w(2)
    assert v == pytest.approx(math.pi, abs=1e-12) and w == pytest.approx(W2, abs=1e-12)
    v, w = ball_volume_and_w(1)
    assert v == 2 and w is None
    v, w = ball_volume_and_w(3)
    z3 = special.zeta(3)
    assert v == pytest.approx(4 * math.pi / 3, abs=1e-12)
    assert w == pytest.approx(v / (2 * z3), abs=1e-12)
    assert w == pytest.approx(1.7423, abs=1e-4)
    for d in range(2, 9):
        assert zeta(d) == pytest.approx(special.zeta(d), abs=1e-12)
        assert ball_volume(d) == pytest.approx(math.pi ** (d / 2) / special.gamma(d / 2 + 1), rel=1e-12)
    with pytest.raises(ValueError):
        ball_volume_and_w(9)


curves = st.one_of(
    st.builds(lambda d: LimitCurve("torus_exact", {"d": d}), st.integers(1, 8)),
    st.builds(lambda d: LimitCurve("lattice_lower", {"d": d}), st.integers(2, 8)),
    st.builds(lambda k, v: LimitCurve("gap_exact", {"k": k, "v1": v}), st.floats(0.2, 4), st.floats(0.1, 5)),
    st.builds(
        lambda a, lam, c0: LimitCurve("lattice_upper", {"d": 2, "a": a, "lam": lam, "c0": c0}),
        st.integers(1, 50), st.floats(0.05, 0.95), st.floats(0.01, 3),
    ),
)


@given(curves, reals, st.floats(0.01, 3))
def test_curves_monotone_in_unit_interval(c, r, dr):
    lo, hi = c(r), c(r + dr)
    assert 0 <= lo <= hi <= 1


@given(st.integers(1, 40), st.floats(0.05, 0.95), st.floats(0.01, 3), reals)
def test_upper_bound_ordering_and_convergence(a, lam, c0, r):
    low = LimitCurve("lattice_lower", {"d": 2})
    up = LimitCurve("lattice_upper", {"d": 2, "a": a, "lam": lam, "c0": c0})
    if theta(a, W2, W2, c0, lam) < 0:
        assert up(r) >= low(r) - 1e-15
    far = LimitCurve("lattice_upper", {"d": 2, "a": 10**4, "lam": lam, "c0": c0})
    assert far(r) == pytest.approx(low(r), abs=1e-9)


@given(st.integers(1, 8), st.floats(-1, 1))
def test_torus_consistency_identity(d, r):
    val = LimitCurve("torus_exact", {"d": d})(r)
    assert -math.log(val) * ball_volume(d) * math.exp(d * r) == pytest.approx(1.0, rel=1e-9)


def test_w_of_a_conventions():
    assert w_of_a(3, 1.0, 1.0, 0.0, 0.5) == 1.0
    # v1 - lam^a/(1-lam^a) c0 v2 with lam^a = 1/8
    assert w_of_a(3, 2.0, 1.0, 0.7, 0.5) == pytest.approx(2 - 0.1)
    assert theta(3, 2.0, 1.0, 0.7, 0.5) == pytest.approx(-1.9)
    assert w_of_a_displayed(3, 2.0, 0.7, 0.5) == pytest.approx(0.2 - 2)
    assert w_of_a(200, W2, W2, 1.0, 0.9) == pytest.approx(W2, abs=1e-8)


def test_iid_maxima_follow_exact_tail_curve():
    # independent uniform Delta values have tail pi e^{-2z} exactly, so the
    # maxima follow exp(-pi e^{-2r}); exp(-e^{-2r}/pi) does not describe them
    n, N = 256, 20000
    d = uniform_deltas(12, n * N, 2).reshape(N, n)
    m = d.max(axis=1)
    tail = LimitCurve("torus_tail", {"d": 2})
    exact = LimitCurve("torus_exact", {"d": 2})
    gaps_exact = []
    for r in (-0.5, 0, 0.5, 1, 1.5):
        u = ScalingSequence(r, 2).u(n)
        p, se = empirical_cdf(m, [u])
        # finite n: (1 - pi e^{-2u})^n differs from the limit by O(1/n)
        finite = (1 - math.pi * math.exp(-2 * u)) ** n
        assert abs(p[0] - finite) <= 3 * max(se[0], 1e-4)
        assert abs(p[0] - tail(r)) <= 3 * max(se[0], 1e-4) + 0.01
        gaps_exact.append(abs(p[0] - exact(r)))
    assert max(gaps_exact) > 0.2
