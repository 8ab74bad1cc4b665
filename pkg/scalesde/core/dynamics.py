import pprint
import logging
import numpy as np
import pandas as pd
from .scale import WeightedSpinVector
from .interactions import InteractionFamily
from .interactions import field_values
from ..ops import weighted_square_sums
from ..ops import ordered_mean
from ..ops import map_replicas
from ..utils import ConfigurationMismatchError
from ..utils import IntegrationDivergedError


class TimeGrid(object):
    """
    Uniform grid t_k = k T / n_steps, k = 0..n_steps.
    """

    def __init__(self, T, n_steps):
        if T <= 0:
            raise ValueError("horizon T must be > 0, got {}".format(T))
        if int(n_steps) != n_steps or n_steps < 1:
            raise ValueError("n_steps must be an integer >= 1, got {}".format(n_steps))
        self.T = float(T)
        self.n_steps = int(n_steps)
        self.dt = self.T / self.n_steps
        self.times = np.arange(self.n_steps + 1) * self.dt

    def __repr__(self):
        return "TimeGrid(T={}, n_steps={})".format(self.T, self.n_steps)

    def __eq__(self, other):
        return (
            isinstance(other, TimeGrid)
            and self.T == other.T
            and self.n_steps == other.n_steps
        )


def _replica_generator(seed, replica):
    sequence = np.random.SeedSequence(seed, spawn_key=(int(replica),))
    return np.random.Generator(np.random.Philox(sequence))


class NoiseBundle(object):
    """
    Brownian increments per (replica, step, site), stored as an array of shape
    (M, n_steps, N). Replica m is drawn from its own counter-based stream, so
    any subset of replicas can be regenerated independently.
    """

    def __init__(self, config, grid, seed, increments):
        self.config = config
        self.grid = grid
        self.seed = int(seed)
        self.increments = increments

    @property
    def M(self):
        return self.increments.shape[0]

    def __repr__(self):
        summary = {
            "seed": self.seed,
            "M": self.M,
            "n_steps": self.grid.n_steps,
            "n_sites": len(self.config),
        }
        return "NoiseBundle(\n{}\n)".format(pprint.pformat(summary))

    def coarsen(self, factor):
        """
        Sum `factor` consecutive increments: the same Brownian paths sampled on
        a grid with n_steps / factor steps.
        """
        factor = int(factor)
        n_steps = self.grid.n_steps
        if factor < 1 or n_steps % factor:
            raise ValueError(
                "coarsening factor {} does not divide n_steps {}".format(factor, n_steps)
            )
        shape = self.increments.shape
        increments = self.increments.reshape(
            shape[0], n_steps // factor, factor, shape[2]
        ).sum(axis=2)
        grid = TimeGrid(self.grid.T, n_steps // factor)
        return NoiseBundle(self.config, grid, self.seed, increments)


class ProcessEnsemble(object):
    """
    M replica paths of spins on a time grid, stored as an array of shape
    (M, n_steps + 1, N).
    """

    def __init__(self, config, grid, paths, provenance=None):
        paths = np.asarray(paths, dtype=np.float64)
        expected = (grid.n_steps + 1, len(config))
        if paths.ndim != 3 or paths.shape[1:] != expected:
            raise ValueError(
                "paths of shape {} do not match grid and configuration {}".format(
                    paths.shape, expected
                )
            )
        self.config = config
        self.grid = grid
        self.paths = paths
        self.provenance = provenance or {}

    @classmethod
    def constant(cls, u0, grid, M):
        """
        Ensemble of M replicas that stay at u0 for all times.
        """
        paths = np.broadcast_to(u0.values, (int(M), grid.n_steps + 1, len(u0))).copy()
        return cls(u0.config, grid, paths, {"method": "constant", "u0": u0.digest})

    @property
    def M(self):
        return self.paths.shape[0]

    def __repr__(self):
        summary = {
            "M": self.M,
            "n_steps": self.grid.n_steps,
            "n_sites": len(self.config),
            "provenance": self.provenance,
        }
        return "ProcessEnsemble(\n{}\n)".format(pprint.pformat(summary))

    def check_compatible(self, other):
        if self.config.id != other.config.id:
            raise ConfigurationMismatchError("ensembles live on different configurations")
        if self.grid != other.grid or self.M != other.M:
            raise ValueError("ensembles differ in grid or replica count")

    def difference(self, other):
        self.check_compatible(other)
        return ProcessEnsemble(
            self.config, self.grid, self.paths - other.paths, {"method": "difference"}
        )

    def replica(self, m):
        return self.paths[m]

    def state(self, k, m):
        return WeightedSpinVector(self.config, self.paths[m, k])

    def at_times(self, stride):
        """
        Ensemble restricted to every `stride`-th grid time.
        """
        stride = int(stride)
        if stride < 1 or self.grid.n_steps % stride:
            raise ValueError(
                "stride {} does not divide n_steps {}".format(stride, self.grid.n_steps)
            )
        grid = TimeGrid(self.grid.T, self.grid.n_steps // stride)
        provenance = dict(self.provenance, stride=stride)
        return ProcessEnsemble(self.config, grid, self.paths[:, ::stride], provenance)


def generate_noise(config, grid, M, seed, workers=1):
    """
    Draw Brownian increments with variance dt for every replica, step and site.

    Parameters
    ----------
    config : Configuration
        sites carrying one scalar Brownian motion each
    grid : TimeGrid
        time grid
    M : int
        number of replicas, >= 1
    seed : int
        unsigned 64-bit seed
    workers : int, optional
        joblib workers, the result does not depend on it

    Returns
    -------
    NoiseBundle
    """
    if M < 1:
        raise ValueError("replica count M must be >= 1, got {}".format(M))
    scale = np.sqrt(grid.dt)
    shape = (grid.n_steps, len(config))

    def draw(start, stop):
        block = np.empty((stop - start,) + shape)
        for i, m in enumerate(range(start, stop)):
            block[i] = _replica_generator(seed, m).standard_normal(shape)
        return block * scale

    increments = map_replicas(draw, int(M), workers)
    return NoiseBundle(config, grid, seed, increments)


def em_increment(drift, diffusion, dt, dW):
    """
    Left-point increment f dt + B dW shared by the integrator and the Picard
    map.
    """
    return drift * dt + diffusion * dW


def _check_inputs(u0, ns, grid, noise):
    if u0.config_id != ns.config.id or noise.config.id != ns.config.id:
        raise ConfigurationMismatchError(
            "initial value, neighbours and noise must share one configuration"
        )
    if noise.grid != grid:
        raise ValueError("noise bundle was generated for {}".format(noise.grid))


def euler_maruyama(V_drift, V_diff, u0, ns, grid, noise, workers=1):
    """
    Integrate d sigma_x = f_x(sigma) dt + B_x(sigma) dW_x with the explicit
    Euler-Maruyama scheme for every replica of the noise bundle.

    Parameters
    ----------
    V_drift, V_diff : InteractionFamily
        drift and diffusion interactions
    u0 : WeightedSpinVector
        deterministic initial value shared by all replicas
    ns : NeighborStructure
        neighbours of the configuration
    grid : TimeGrid
        time grid, equal to the grid of the noise
    noise : NoiseBundle
        Brownian increments
    workers : int, optional
        joblib workers, the result does not depend on it

    Returns
    -------
    ProcessEnsemble

    Raises
    ------
    IntegrationDivergedError
        when a state becomes non-finite
    """
    _check_inputs(u0, ns, grid, noise)
    dW = noise.increments

    def integrate(start, stop):
        paths = np.empty((stop - start, grid.n_steps + 1, len(u0)))
        state = np.tile(u0.values, (stop - start, 1))
        paths[:, 0] = state
        for k in range(grid.n_steps):
            state = state + em_increment(
                field_values(V_drift, state, ns),
                field_values(V_diff, state, ns),
                grid.dt,
                dW[start:stop, k],
            )
            finite = np.isfinite(state).all(axis=1)
            if not finite.all():
                raise IntegrationDivergedError(start + int(np.argmin(finite)), k + 1)
            paths[:, k + 1] = state
        return paths

    paths = map_replicas(integrate, noise.M, workers)
    provenance = {"method": "euler_maruyama", "noise_seed": noise.seed, "u0": u0.digest}
    return ProcessEnsemble(u0.config, grid, paths, provenance)


def increment_moment(ens, s_idx, t_idx, beta, p):
    """
    Replica average of ||xi(t) - xi(s)||_beta^p.

    Parameters
    ----------
    ens : ProcessEnsemble
        paths
    s_idx, t_idx : int
        grid indices with s_idx < t_idx
    beta : float
        scale index
    p : float
        moment, >= 2

    Returns
    -------
    float
    """
    if p < 2:
        raise ValueError("moment p must be >= 2, got {}".format(p))
    if not s_idx < t_idx:
        raise ValueError("increment_moment needs s_idx < t_idx")
    if s_idx < 0 or t_idx > ens.grid.n_steps:
        raise IndexError(
            "indices ({}, {}) outside the grid 0..{}".format(s_idx, t_idx, ens.grid.n_steps)
        )
    diff = ens.paths[:, t_idx] - ens.paths[:, s_idx]
    powers = weighted_square_sums(diff, ens.config.radii, beta) ** (p / 2.0)
    return float(ordered_mean(powers, axis=0))


def locality_check(V_drift, u0, ns, grid, site, k_steps, perturbation=1.0):
    """
    Perturb u0 at `site`, integrate both initial values without diffusion and
    compare the states after `k_steps` steps.

    Returns
    -------
    dict
        changed : indices of the sites whose state differs
        hops : graph distance of each changed site from `site`
        within : every changed site is within `k_steps` hops
    """
    if not 0 <= k_steps <= grid.n_steps:
        raise IndexError("k_steps must lie in 0..{}".format(grid.n_steps))
    no_diffusion = InteractionFamily(J=0.0, r=V_drift.r)
    noise = NoiseBundle(u0.config, grid, 0, np.zeros((1, grid.n_steps, len(u0))))
    perturbed = u0.values.copy()
    perturbed[site] += perturbation
    u1 = WeightedSpinVector(u0.config, perturbed)

    base = euler_maruyama(V_drift, no_diffusion, u0, ns, grid, noise)
    moved = euler_maruyama(V_drift, no_diffusion, u1, ns, grid, noise)
    changed = np.flatnonzero(base.paths[0, k_steps] != moved.paths[0, k_steps])
    hops = ns.hop_distances(site)[changed]
    within = bool(np.all(hops <= k_steps))
    if not within:
        logging.warning(
            "state changed {} hops away from site {} after {} steps".format(
                hops.max(), site, k_steps
            )
        )
    return {"changed": changed, "hops": hops, "within": within}


def summary_table(ens, alphas, p):
    """
    Per-time Z-norm values (E ||u(t)||_alpha^p)^(1/p) with the standard error of
    the replica mean of the p-th powers.

    Returns
    -------
    pandas.DataFrame
        columns (t, alpha, p, z_norm, stderr), sorted by alpha then t
    """
    frames = []
    for alpha in alphas:
        powers = weighted_square_sums(ens.paths, ens.config.radii, alpha) ** (p / 2.0)
        means = ordered_mean(powers, axis=0)
        if ens.M > 1:
            stderr = np.std(powers, axis=0, ddof=1) / np.sqrt(ens.M)
        else:
            stderr = np.zeros_like(means)
        frames.append(
            pd.DataFrame(
                {
                    "t": ens.grid.times,
                    "alpha": float(alpha),
                    "p": float(p),
                    "z_norm": means ** (1.0 / p),
                    "stderr": stderr,
                },
                columns=["t", "alpha", "p", "z_norm", "stderr"],
            )
        )
    return pd.concat(frames, ignore_index=True)
