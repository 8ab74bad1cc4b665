import numpy as np
import pytest
from scalesde.core.configuration import Configuration
from scalesde.core.configuration import sample_poisson
from scalesde.core.dynamics import ProcessEnsemble
from scalesde.core.dynamics import TimeGrid
from scalesde.core.scale import ScaleInterval
from scalesde.core.scale import WeightedSpinVector
from scalesde.core.scale import norm_distance
from scalesde.core.scale import weighted_norm
from scalesde.core.scale import zp_distance
from scalesde.core.scale import zp_norm_estimate
from scalesde.utils import ConfigurationMismatchError


def random_vector(config, seed):
    rng = np.random.default_rng(seed)
    return WeightedSpinVector(config, rng.normal(size=len(config)))


# zero vector has norm zero for every index
def test_scale_weighted_norm_zero_vector():
    config = sample_poisson(2, 5.0, 1.0, seed=3)
    v = WeightedSpinVector(config, np.zeros(len(config)))

    assert weighted_norm(v, 0.0) == 0.0
    assert weighted_norm(v, 1.7) == 0.0


# single site at distance 2 with value 1 has norm exp(-1) at index 1
def test_scale_weighted_norm_single_site():
    config = Configuration([[2.0]], 5.0)
    v = WeightedSpinVector(config, [1.0])

    assert weighted_norm(v, 1.0) == pytest.approx(np.exp(-1.0), rel=1e-15)


# norms do not increase along the scale
def test_scale_weighted_norm_monotone_in_alpha():
    config = sample_poisson(1, 20.0, 1.0, seed=11)
    v = random_vector(config, 0)
    norms = [weighted_norm(v, alpha) for alpha in np.linspace(0.0, 3.0, 13)]

    assert all(a >= b for a, b in zip(norms, norms[1:]))


# norm is absolutely homogeneous
def test_scale_weighted_norm_homogeneous():
    config = sample_poisson(1, 20.0, 1.0, seed=11)
    v = random_vector(config, 1)

    assert weighted_norm(v * -3.0, 0.5) == pytest.approx(3.0 * weighted_norm(v, 0.5), rel=1e-14)


# negative scale index is rejected
def test_scale_weighted_norm_negative_alpha():
    config = Configuration([[0.5]], 1.0)
    v = WeightedSpinVector(config, [1.0])

    with pytest.raises(ValueError):
        weighted_norm(v, -0.1)


# vectors on different configurations cannot be combined
def test_scale_configuration_mismatch():
    v1 = WeightedSpinVector(Configuration([[0.5]], 1.0), [1.0])
    v2 = WeightedSpinVector(Configuration([[0.25]], 1.0), [1.0])

    with pytest.raises(ConfigurationMismatchError):
        norm_distance(v1, v2, 1.0)
    with pytest.raises(ConfigurationMismatchError):
        v1 - v2


# distance equals the brute force weighted sum on ten sites
def test_scale_norm_distance_brute_force():
    rng = np.random.default_rng(5)
    points = rng.uniform(-4.0, 4.0, size=(10, 2))
    config = Configuration(points, 4.0)
    v1 = random_vector(config, 2)
    v2 = random_vector(config, 3)
    expected = np.sqrt(
        sum(
            (v1.values[i] - v2.values[i]) ** 2 * np.exp(-0.7 * np.linalg.norm(points[i]))
            for i in range(10)
        )
    )

    assert norm_distance(v1, v2, 0.7) == pytest.approx(expected, rel=1e-13)
    assert norm_distance(v1, v1, 0.7) == 0.0


# distance is symmetric and satisfies the triangle inequality
def test_scale_norm_distance_metric():
    config = sample_poisson(1, 10.0, 1.0, seed=2)
    a, b, c = (random_vector(config, seed) for seed in range(3))

    assert norm_distance(a, b, 0.3) == norm_distance(b, a, 0.3)
    assert norm_distance(a, c, 0.3) <= norm_distance(a, b, 0.3) + norm_distance(b, c, 0.3)


# scale interval rejects reversed bounds and unsorted grids
def test_scale_interval_validation():
    with pytest.raises(ValueError):
        ScaleInterval(2.0, 1.0)
    with pytest.raises(ValueError):
        ScaleInterval(0.0, 1.0, [0.5, 0.2])
    with pytest.raises(ValueError):
        ScaleInterval(0.0, 1.0, [0.5, 1.5])


# uniform grid has all ordered pairs
def test_scale_interval_pairs():
    scale = ScaleInterval.uniform(0.5, 2.0, 6)

    assert len(scale) == 6
    assert scale.top == 2.0
    assert len(scale.pairs()) == 15
    assert all(a < b for a, b in scale.pairs())


# constant ensemble has the norm of its value
def test_scale_zp_norm_constant_ensemble():
    config = sample_poisson(1, 10.0, 1.0, seed=4)
    v = random_vector(config, 4)
    ens = ProcessEnsemble.constant(v, TimeGrid(1.0, 4), 7)
    estimate = zp_norm_estimate(ens, 0.5, 2.0)

    assert estimate.value == pytest.approx(weighted_norm(v, 0.5), rel=1e-14)
    assert estimate.std_error == 0.0


# single replica gives the supremum of its own path
def test_scale_zp_norm_single_replica():
    config = Configuration([[0.0], [1.0]], 2.0)
    paths = np.array([[[1.0, 0.0], [3.0, 0.0], [2.0, 1.0]]])
    ens = ProcessEnsemble(config, TimeGrid(1.0, 2), paths)
    estimate = zp_norm_estimate(ens, 0.0, 2.0)

    assert estimate.value == pytest.approx(3.0)
    assert estimate.t_sup == 0.5


# estimate matches a direct loop over replicas and times
def test_scale_zp_norm_loop_oracle():
    rng = np.random.default_rng(9)
    config = Configuration(rng.uniform(-3.0, 3.0, size=(5, 1)), 3.0)
    paths = rng.normal(size=(4, 3, 5))
    ens = ProcessEnsemble(config, TimeGrid(2.0, 2), paths)
    alpha, p = 0.8, 3.0

    best = 0.0
    for k in range(3):
        total = 0.0
        for m in range(4):
            total += np.sum(paths[m, k] ** 2 * np.exp(-alpha * np.abs(config.points[:, 0]))) ** (p / 2)
        best = max(best, total / 4)

    assert zp_norm_estimate(ens, alpha, p).value == pytest.approx(best ** (1 / p), rel=1e-13)


# moments below two are rejected
def test_scale_zp_norm_rejects_small_p():
    config = Configuration([[0.0]], 1.0)
    ens = ProcessEnsemble.constant(WeightedSpinVector(config, [1.0]), TimeGrid(1.0, 2), 2)

    with pytest.raises(ValueError):
        zp_norm_estimate(ens, 0.0, 1.5)


# distance of an ensemble to itself vanishes
def test_scale_zp_distance_self():
    config = sample_poisson(1, 5.0, 1.0, seed=1)
    ens = ProcessEnsemble(
        config, TimeGrid(1.0, 3), np.random.default_rng(0).normal(size=(3, 4, len(config)))
    )

    assert zp_distance(ens, ens, 0.5, 2.0).value == 0.0
