import numpy as np
import pytest

from evtwalk import lattices, rng, torus
from evtwalk.errors import BadWeights, EmptySupport, NonIntegerEntries, NonUnimodular
from evtwalk.evt import empirical_cdf
from evtwalk.walkcore import (
    GeneratorMeasure,
    SeedPlan,
    TrajectoryStream,
    choice_indices,
    default_measure,
    elementary_generators,
    validate_measure,
    walk_stream,
)

CAT = [[2, 1], [1, 1]]
CAT2 = [[1, 1], [1, 2]]


def test_validate_accepts_torus_pair():
    m = validate_measure(GeneratorMeasure([CAT, CAT2], [0.5, 0.5]), "torus")
    assert m.size == 2 and m.dim == 2


def test_validate_accepts_diagonal_lattice_element():
    m = validate_measure(GeneratorMeasure([[[2, 0], [0, 0.5]]], [1.0]), "lattice")
    assert m.size == 1


def test_validate_rejects_weights_not_summing_to_one():
    with pytest.raises(BadWeights):
        validate_measure(GeneratorMeasure([CAT, CAT2], [0.7, 0.7]), "torus")


def test_validate_renormalises_tiny_weight_error():
    m = validate_measure(GeneratorMeasure([CAT, CAT2], [0.5, 0.5 + 5e-10]), "torus")
    assert abs(m.weights.sum() - 1.0) < 1e-15


@pytest.mark.parametrize("w", [[1.0, 0.0], [1.5, -0.5]])
def test_validate_rejects_non_positive_weights(w):
    with pytest.raises(BadWeights):
        validate_measure(GeneratorMeasure([CAT, CAT2], w), "torus")


def test_validate_errors():
    with pytest.raises(EmptySupport):
        validate_measure(GeneratorMeasure(np.zeros((0, 2, 2)), np.zeros(0)), "torus")
    with pytest.raises(NonIntegerEntries):
        validate_measure(GeneratorMeasure([[[2, 0], [0, 0.5]]], [1.0]), "torus")
    with pytest.raises(NonUnimodular):
        validate_measure(GeneratorMeasure([[[2, 0], [0, 1]]], [1.0]), "torus")
    with pytest.raises(NonUnimodular):
        validate_measure(GeneratorMeasure([[[2, 0], [0, 0.6]]], [1.0]), "lattice")
    with pytest.raises(ValueError):
        validate_measure(GeneratorMeasure([CAT], [1.0]), "sphere")


def test_default_measures_are_valid():
    for d in (2, 3):
        validate_measure(default_measure("torus", d), "torus")
    for d in range(2, 9):
        m = validate_measure(default_measure("lattice", d), "lattice")
        assert m.size == d * (d - 1)
    two = default_measure("lattice", 2).elements
    assert np.array_equal(two, [[[1, 2], [0, 1]], [[1, 0], [2, 1]]])
    assert elementary_generators(3).shape == (6, 3, 3)


def test_walk_stream_single_element_is_start():
    x0 = torus.TorusPoint.from_floats([0.25, 0.5])
    out = list(walk_stream(torus.torus_action, default_measure("torus", 2), x0, 1, SeedPlan(1)))
    assert out == [x0]


def test_walk_stream_deterministic_measure():
    A = torus.TorusAutomorphism(CAT)
    m = GeneratorMeasure.uniform([CAT])
    x0 = torus.TorusPoint.from_floats([0.1, 0.7])
    out = list(walk_stream(torus.torus_action, m, x0, 3, SeedPlan(5)))
    x1 = torus.apply_automorphism(A, x0)
    x2 = torus.apply_automorphism(A, x1)
    assert out == [x0, x1, x2]


def test_walk_stream_rejects_empty():
    with pytest.raises(ValueError):
        list(walk_stream(torus.torus_action, default_measure("torus", 2), None, 0, SeedPlan(1)))


def test_trajectory_stream_counts_steps():
    ts = TrajectoryStream(torus.torus_action, default_measure("torus", 2), torus.TorusPoint.from_floats([0.3, 0.1]), SeedPlan(2))
    for i in range(1, 5000):
        ts.advance()
        assert ts.step_index == i


def test_walk_stream_reproducible_bytes():
    m = default_measure("torus", 2)
    x0 = torus.TorusPoint.random(SeedPlan(9, 3), 2)
    a = np.array([p.coords for p in walk_stream(torus.torus_action, m, x0, 10**4, SeedPlan(9, 3))])
    b = np.array([p.coords for p in walk_stream(torus.torus_action, m, x0, 10**4, SeedPlan(9, 3))])
    assert a.tobytes() == b.tobytes()


def test_kernel_matches_python_walk():
    # the compiled kernel and walk_stream draw the same generators
    m = default_measure("torus", 2)
    seed, traj = 17, 4
    sp = SeedPlan(seed, traj)
    x0 = torus.TorusPoint(rng.raw_u64(seed, traj, rng.LANE_INIT, 2))
    target = torus.TorusPoint(rng.raw_u64(seed, traj, rng.LANE_TARGET, 2))
    py = [torus.closest_return_delta(x, target) for x in walk_stream(torus.torus_action, m, x0, 300, sp)]
    k = torus.observe_deltas(m, seed, traj, 1, np.arange(300))[0]
    np.testing.assert_allclose(k, py, rtol=0, atol=1e-12)


def test_lattice_kernel_matches_python_walk_early():
    # float lattice walks are chaotic, so agreement is checked over a short horizon
    m = default_measure("lattice", 2)
    seed, traj = 3, 2
    b0 = lattices.LatticeBasis(lattices.haar_samples_2d(seed, 1, traj)[0])
    py = [lattices.delta_shortest(b) for b in walk_stream(lattices.lattice_action, m, b0, 8, SeedPlan(seed, traj))]
    k = lattices.observe_lattice(m, seed, traj, 1, np.arange(8), block_steps=False).deltas[0]
    np.testing.assert_allclose(k, py, atol=1e-9)


def test_block_split_does_not_change_results():
    m = default_measure("torus", 2)
    times = np.arange(0, 200, 7)
    whole = torus.observe_deltas(m, 5, 0, 64, times)
    parts = np.vstack([torus.observe_deltas(m, 5, s, 16, times) for s in (48, 32, 16, 0)][::-1])
    assert whole.tobytes() == parts.tobytes()


def test_generator_frequencies():
    w = np.array([0.1, 0.2, 0.3, 0.4])
    m = GeneratorMeasure(np.tile(np.eye(2), (4, 1, 1)), w)
    idx = choice_indices(m, SeedPlan(11), 1, 10**6)
    counts = np.bincount(idx, minlength=4)
    sd = np.sqrt(10**6 * w * (1 - w))
    assert np.all(np.abs(counts - 10**6 * w) < 4 * sd)


def _stationary(obs, thresholds):
    base, base_se = empirical_cdf(obs[:, 0], thresholds)
    for col in range(1, obs.shape[1]):
        p, se = empirical_cdf(obs[:, col], thresholds)
        assert np.all(np.abs(p - base) <= 3 * np.sqrt(se**2 + base_se**2) + 1e-12)


def test_torus_stationarity():
    obs = torus.observe_deltas(default_measure("torus", 2), 21, 0, 20000, [0, 10, 100, 1000])
    _stationary(obs, [0.0, 0.5, 1.0, 1.5, 2.0])


def test_lattice_stationarity():
    obs = lattices.observe_lattice(default_measure("lattice", 2), 21, 0, 20000, [0, 10, 100, 1000]).deltas
    _stationary(obs, [-0.2, 0.0, 0.2, 0.5, 1.0])


def test_seed_range_checked():
    with pytest.raises(ValueError):
        SeedPlan(-1)
    with pytest.raises(ValueError):
        SeedPlan(2**64)
    with pytest.raises(ValueError):
        SeedPlan(1, -2)
