import hashlib
import itertools
import pprint
from dataclasses import dataclass
import numpy as np
from ..ops import weighted_square_sums
from ..ops import ordered_mean
from ..utils import ConfigurationMismatchError


class ScaleInterval(object):
    """
    Interval of scale indices [alpha_star, alpha_sup] with an ordered grid of
    indices used for the diagnostics.

    Parameters
    ----------
    alpha_star : float
        lower index, >= 0
    alpha_sup : float
        upper index, > alpha_star
    grid : list of float, optional
        strictly increasing indices inside the interval. Defaults to the two
        end points.
    """

    def __init__(self, alpha_star, alpha_sup, grid=None):
        alpha_star = float(alpha_star)
        alpha_sup = float(alpha_sup)
        if not 0 <= alpha_star < alpha_sup:
            raise ValueError(
                "scale interval requires 0 <= alpha_star < alpha_sup, got [{}, {}]".format(
                    alpha_star, alpha_sup
                )
            )
        if grid is None:
            grid = [alpha_star, alpha_sup]
        grid = np.asarray(grid, dtype=np.float64)
        if grid.ndim != 1 or grid.size < 1 or np.any(np.diff(grid) <= 0):
            raise ValueError("scale grid must be strictly increasing")
        if grid[0] < alpha_star or grid[-1] > alpha_sup:
            raise ValueError("scale grid must lie inside [alpha_star, alpha_sup]")

        self.alpha_star = alpha_star
        self.alpha_sup = alpha_sup
        self.grid = grid

    @classmethod
    def uniform(cls, alpha_star, alpha_sup, n):
        """
        Scale interval with `n` equally spaced grid indices including both ends.
        """
        return cls(alpha_star, alpha_sup, np.linspace(alpha_star, alpha_sup, int(n)))

    def __repr__(self):
        return "ScaleInterval(\n{}\n)".format(pprint.pformat(self.to_dict()))

    def __len__(self):
        return len(self.grid)

    @property
    def top(self):
        return float(self.grid[-1])

    def pairs(self):
        """
        All grid pairs (alpha, beta) with alpha < beta, in lexicographic order.
        """
        return [
            (float(a), float(b)) for a, b in itertools.combinations(self.grid, 2)
        ]

    def to_dict(self):
        return {
            "alpha_star": self.alpha_star,
            "alpha_sup": self.alpha_sup,
            "grid": self.grid.tolist(),
        }


class WeightedSpinVector(object):
    """
    Spin values indexed by the sites of a configuration.

    Parameters
    ----------
    config : Configuration
        configuration the values live on
    values : array_like
        one finite real value per site
    """

    def __init__(self, config, values):
        values = np.array(values, dtype=np.float64)
        if values.shape != (len(config),):
            raise ConfigurationMismatchError(
                "{} values given for a configuration with {} sites".format(
                    values.size, len(config)
                )
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("spin values must be finite")
        self.config = config
        self.values = values

    @property
    def config_id(self):
        return self.config.id

    @property
    def digest(self):
        """
        sha256 of the configuration id and the little endian values.
        """
        digest = hashlib.sha256(self.config_id.encode())
        digest.update(self.values.astype("<f8").tobytes())
        return digest.hexdigest()

    def __len__(self):
        return self.values.size

    def __repr__(self):
        return "WeightedSpinVector(config_id={}, values={})".format(
            self.config_id[:12], np.array2string(self.values, threshold=8)
        )

    def __add__(self, other):
        _check_same_config(self, other)
        return WeightedSpinVector(self.config, self.values + other.values)

    def __sub__(self, other):
        _check_same_config(self, other)
        return WeightedSpinVector(self.config, self.values - other.values)

    def __mul__(self, scalar):
        return WeightedSpinVector(self.config, float(scalar) * self.values)

    __rmul__ = __mul__


@dataclass
class ZpNormEstimate:
    """
    Monte Carlo estimate of sup_t (E ||u(t)||_alpha^p)^(1/p) on the time grid.
    `std_error` is the standard error of the replica mean of the p-th powers at
    the time `t_sup` where the supremum is attained.
    """

    value: float
    std_error: float
    p: float
    alpha: float
    t_sup: float

    @property
    def value_std_error(self):
        """
        Standard error of the rooted value (delta method).
        """
        mean = self.value ** self.p
        if mean <= 0:
            return 0.0
        return self.std_error / (self.p * mean ** ((self.p - 1.0) / self.p))


def _check_same_config(v1, v2):
    if v1.config_id != v2.config_id:
        raise ConfigurationMismatchError(
            "vectors live on different configurations ({} != {})".format(
                v1.config_id[:12], v2.config_id[:12]
            )
        )


def weighted_norm(v, alpha, config=None):
    """
    Norm of the weighted space: sqrt(sum_x |v_x|^2 exp(-alpha |x|)).

    Parameters
    ----------
    v : WeightedSpinVector
        vector to measure
    alpha : float
        scale index, >= 0
    config : Configuration, optional
        if given, the vector must live on this configuration

    Returns
    -------
    float
        the norm
    """
    if alpha < 0:
        raise ValueError("scale index must be >= 0, got {}".format(alpha))
    if config is not None and config.id != v.config_id:
        raise ConfigurationMismatchError(
            "vector does not live on configuration {}".format(config.id[:12])
        )
    return float(np.sqrt(weighted_square_sums(v.values, v.config.radii, alpha)))


def norm_distance(v1, v2, alpha):
    """
    Weighted norm of the difference `v1 - v2`.
    """
    _check_same_config(v1, v2)
    return weighted_norm(v1 - v2, alpha)


def zp_from_paths(paths, radii, times, alpha, p):
    """
    Z-norm estimate from a raw array of replica paths.

    Parameters
    ----------
    paths : numpy.ndarray
        array of shape (M, K + 1, N)
    radii : numpy.ndarray
        site radii, shape (N,)
    times : numpy.ndarray
        grid times, shape (K + 1,)
    alpha : float
        scale index
    p : float
        moment, >= 2

    Returns
    -------
    ZpNormEstimate
    """
    if p < 2:
        raise ValueError("moment p must be >= 2, got {}".format(p))
    if paths.shape[0] == 0 or paths.shape[1] == 0:
        raise ValueError("ensemble is empty")

    n_replicas = paths.shape[0]
    powers = weighted_square_sums(paths, radii, alpha) ** (p / 2.0)
    means = ordered_mean(powers, axis=0)
    k_sup = int(np.argmax(means))
    if n_replicas > 1:
        std_error = float(np.std(powers[:, k_sup], ddof=1) / np.sqrt(n_replicas))
    else:
        std_error = 0.0
    return ZpNormEstimate(
        value=float(means[k_sup] ** (1.0 / p)),
        std_error=std_error,
        p=float(p),
        alpha=float(alpha),
        t_sup=float(times[k_sup]),
    )


def zp_norm_estimate(ens, alpha, p):
    """
    Estimate sup_t (E ||u(t)||_alpha^p)^(1/p) over the grid times of an
    ensemble. Replica means are accumulated in ascending replica order.

    Parameters
    ----------
    ens : ProcessEnsemble
        replica paths on a time grid
    alpha : float
        scale index
    p : float
        moment, >= 2

    Returns
    -------
    ZpNormEstimate
    """
    return zp_from_paths(ens.paths, ens.config.radii, ens.grid.times, alpha, p)


def zp_distance(ens1, ens2, alpha, p):
    """
    Z-norm estimate of the difference of two ensembles sharing configuration,
    grid and replica count.
    """
    if ens1.config.id != ens2.config.id:
        raise ConfigurationMismatchError("ensembles live on different configurations")
    if ens1.paths.shape != ens2.paths.shape:
        raise ValueError(
            "ensemble shapes differ: {} != {}".format(ens1.paths.shape, ens2.paths.shape)
        )
    return zp_from_paths(
        ens1.paths - ens2.paths, ens1.config.radii, ens1.grid.times, alpha, p
    )
