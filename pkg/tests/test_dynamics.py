import numpy as np
import pytest
from scalesde.core.configuration import Configuration
from scalesde.core.configuration import build_neighbors
from scalesde.core.configuration import lattice_configuration
from scalesde.core.configuration import sample_poisson
from scalesde.core.dynamics import ProcessEnsemble
from scalesde.core.dynamics import TimeGrid
from scalesde.core.dynamics import euler_maruyama
from scalesde.core.dynamics import generate_noise
from scalesde.core.dynamics import increment_moment
from scalesde.core.dynamics import locality_check
from scalesde.core.dynamics import summary_table
from scalesde.core.interactions import InteractionFamily
from scalesde.core.scale import WeightedSpinVector
from scalesde.utils import ConfigurationMismatchError
from scalesde.utils import IntegrationDivergedError


def reference_setup(M=16, n_steps=16, seed=3):
    config = sample_poisson(1, 10.0, 1.0, seed=seed)
    ns = build_neighbors(config, 1.5)
    grid = TimeGrid(1.0, n_steps)
    u0 = WeightedSpinVector(config, np.ones(len(config)))
    noise = generate_noise(config, grid, M, seed=99)
    return config, ns, grid, u0, noise


# time grid rejects empty horizons and step counts
def test_dynamics_time_grid_validation():
    assert TimeGrid(2.0, 4).times.tolist() == [0.0, 0.5, 1.0, 1.5, 2.0]
    with pytest.raises(ValueError):
        TimeGrid(0.0, 4)
    with pytest.raises(ValueError):
        TimeGrid(1.0, 0)


# noise does not depend on the number of workers
def test_dynamics_noise_workers_identical():
    config = sample_poisson(1, 10.0, 1.0, seed=1)
    grid = TimeGrid(1.0, 8)
    one = generate_noise(config, grid, 10, seed=5, workers=1)
    three = generate_noise(config, grid, 10, seed=5, workers=3)

    assert np.array_equal(one.increments, three.increments)


# each replica has its own stream
def test_dynamics_noise_replica_prefix():
    config = sample_poisson(1, 10.0, 1.0, seed=1)
    grid = TimeGrid(1.0, 8)
    small = generate_noise(config, grid, 3, seed=5)
    large = generate_noise(config, grid, 9, seed=5)

    assert np.array_equal(small.increments, large.increments[:3])


# increments have variance dt
def test_dynamics_noise_variance():
    config = lattice_configuration(1, 5.0)
    grid = TimeGrid(2.0, 50)
    noise = generate_noise(config, grid, 200, seed=12)

    assert noise.increments.shape == (200, 50, 11)
    assert np.mean(noise.increments ** 2) == pytest.approx(grid.dt, rel=0.03)


# coarsening sums consecutive increments
def test_dynamics_noise_coarsen():
    config = lattice_configuration(1, 1.0)
    noise = generate_noise(config, TimeGrid(1.0, 8), 2, seed=4)
    coarse = noise.coarsen(4)

    assert coarse.grid == TimeGrid(1.0, 2)
    assert np.allclose(coarse.increments[:, 0], noise.increments[:, :4].sum(axis=1))
    with pytest.raises(ValueError):
        noise.coarsen(3)


# without interactions the paths stay at u0
def test_dynamics_em_zero_families():
    config, ns, grid, u0, noise = reference_setup()
    zero = InteractionFamily(J=0.0)
    ens = euler_maruyama(zero, zero, u0, ns, grid, noise)

    assert np.all(ens.paths == 1.0)


# free sites follow their Brownian paths
def test_dynamics_em_free_brownian():
    config, ns, grid, u0, noise = reference_setup()
    ens = euler_maruyama(InteractionFamily(J=0.0), InteractionFamily(J=0.0, h=1.0), u0, ns, grid, noise)
    expected = 1.0 + np.cumsum(noise.increments, axis=1)

    assert np.allclose(ens.paths[:, 1:], expected, rtol=0, atol=1e-12)


# integration does not depend on the number of workers
def test_dynamics_em_workers_identical():
    config, ns, grid, u0, noise = reference_setup()
    drift = InteractionFamily(J=0.2, r=1.5)
    diffusion = InteractionFamily(J=0.1, r=1.5, h=0.1)
    one = euler_maruyama(drift, diffusion, u0, ns, grid, noise, workers=1)
    four = euler_maruyama(drift, diffusion, u0, ns, grid, noise, workers=4)

    assert np.array_equal(one.paths, four.paths)


# provenance names the initial value, not only the noise
def test_dynamics_em_provenance_initial_value():
    config, ns, grid, u0, noise = reference_setup()
    drift = InteractionFamily(J=0.2, r=1.5)
    diffusion = InteractionFamily(J=0.1, r=1.5, h=0.1)
    one = euler_maruyama(drift, diffusion, u0, ns, grid, noise)
    two = euler_maruyama(drift, diffusion, u0 * 2.0, ns, grid, noise)
    again = euler_maruyama(drift, diffusion, WeightedSpinVector(config, u0.values), ns, grid, noise)

    assert one.provenance["noise_seed"] == two.provenance["noise_seed"]
    assert one.provenance["u0"] == again.provenance["u0"] == u0.digest
    assert one.provenance["u0"] != two.provenance["u0"]
    assert ProcessEnsemble.constant(u0, grid, 2).provenance["u0"] == u0.digest


# blow up is reported with replica and step
def test_dynamics_em_diverges():
    config = Configuration([[0.0]], 1.0)
    ns = build_neighbors(config, 1.5)
    grid = TimeGrid(1.0, 10)
    noise = generate_noise(config, grid, 2, seed=0)
    explosive = InteractionFamily(J=0.0, kappa=-1e300)

    with pytest.raises(IntegrationDivergedError) as err:
        euler_maruyama(explosive, InteractionFamily(J=0.0), WeightedSpinVector(config, [1.0]), ns, grid, noise)
    assert err.value.replica == 0
    assert err.value.step == 2


# noise of another configuration is rejected
def test_dynamics_em_configuration_mismatch():
    config, ns, grid, u0, _ = reference_setup()
    other = generate_noise(lattice_configuration(1, 2.0), grid, 4, seed=1)

    with pytest.raises(ConfigurationMismatchError):
        euler_maruyama(InteractionFamily(), InteractionFamily(), u0, ns, grid, other)


# increment moments of a free Brownian site grow like the lag
def test_dynamics_increment_moment_brownian():
    config = Configuration([[0.0]], 1.0)
    ns = build_neighbors(config, 1.0)
    grid = TimeGrid(1.0, 16)
    noise = generate_noise(config, grid, 4000, seed=8)
    ens = euler_maruyama(
        InteractionFamily(J=0.0, r=1.0), InteractionFamily(J=0.0, r=1.0, h=1.0),
        WeightedSpinVector(config, [0.0]), ns, grid, noise,
    )

    assert increment_moment(ens, 0, 16, 0.0, 2.0) == pytest.approx(1.0, rel=0.1)
    assert increment_moment(ens, 4, 8, 0.0, 2.0) == pytest.approx(0.25, rel=0.1)


# increment moments need ordered indices on the grid
def test_dynamics_increment_moment_indices():
    config, ns, grid, u0, noise = reference_setup()
    ens = ProcessEnsemble.constant(u0, grid, 2)

    with pytest.raises(ValueError):
        increment_moment(ens, 3, 3, 0.5, 2.0)
    with pytest.raises(IndexError):
        increment_moment(ens, 0, grid.n_steps + 1, 0.5, 2.0)


# a perturbation travels at most one hop per step
def test_dynamics_locality():
    config = lattice_configuration(1, 10.0)
    ns = build_neighbors(config, 1.5)
    u0 = WeightedSpinVector(config, np.ones(len(config)))
    report = locality_check(InteractionFamily(J=0.2, r=1.5), u0, ns, TimeGrid(1.0, 8), 0, 3)

    assert report["within"]
    assert report["changed"].tolist() == [0, 1, 2, 3]
    assert report["hops"].max() == 3


# summary table has one row per time and index
def test_dynamics_summary_table():
    config, ns, grid, u0, noise = reference_setup()
    ens = euler_maruyama(InteractionFamily(J=0.2), InteractionFamily(J=0.1, h=0.1), u0, ns, grid, noise)
    table = summary_table(ens, [0.5, 1.0, 2.0], 2.0)

    assert list(table.columns) == ["t", "alpha", "p", "z_norm", "stderr"]
    assert len(table) == 3 * (grid.n_steps + 1)
    first = table[table["alpha"] == 0.5]["z_norm"].to_numpy()
    last = table[table["alpha"] == 2.0]["z_norm"].to_numpy()
    assert np.all(last <= first)


# ensemble restriction keeps every stride-th time
def test_dynamics_ensemble_at_times():
    config, ns, grid, u0, noise = reference_setup()
    ens = euler_maruyama(InteractionFamily(J=0.2), InteractionFamily(J=0.1, h=0.1), u0, ns, grid, noise)
    half = ens.at_times(2)

    assert half.grid == TimeGrid(1.0, 8)
    assert np.array_equal(half.paths, ens.paths[:, ::2])
    with pytest.raises(ValueError):
        ens.at_times(3)
