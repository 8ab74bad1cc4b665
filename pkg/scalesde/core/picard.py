import logging
import pprint
import numpy as np
import pandas as pd
from .scale import ScaleInterval
from .scale import zp_distance
from .dynamics import NoiseBundle
from .dynamics import ProcessEnsemble
from .dynamics import TimeGrid
from .dynamics import em_increment
from .dynamics import euler_maruyama
from .dynamics import generate_noise
from .interactions import InteractionFamily
from .interactions import field_values
from .interactions import scale_lipschitz_constant
from .estimates import picard_bound
from ..ops import map_replicas
from ..utils import ConfigurationMismatchError


class PicardDiagnostics(object):
    """
    Distances d_n = ||T^n(xi) - T^(n+1)(xi)||_{Z_beta} for every iteration n
    and grid index beta, the residual of the returned iterate and, when
    contraction constants were supplied, the theoretical bound of every d_n.

    Attributes
    ----------
    betas : numpy.ndarray
        scale grid
    distances : numpy.ndarray
        array (n_iterations, n_betas) of d_n
    std_errors : numpy.ndarray
        standard errors of the rooted distances
    bounds : numpy.ndarray or None
        bound_n at the top grid index
    residual, residual_std_error : numpy.ndarray
        ||xi - T(xi)|| of the returned iterate per grid index
    converged : bool
        d_n <= tol at every grid index was reached
    """

    def __init__(self, betas, p):
        self.betas = np.asarray(betas, dtype=np.float64)
        self.p = float(p)
        self._distances = []
        self._std_errors = []
        self.bounds = None
        self.residual = None
        self.residual_std_error = None
        self.converged = False

    def append(self, estimates):
        self._distances.append([e.value for e in estimates])
        self._std_errors.append([e.value_std_error for e in estimates])

    @property
    def distances(self):
        return np.array(self._distances).reshape(-1, len(self.betas))

    @property
    def std_errors(self):
        return np.array(self._std_errors).reshape(-1, len(self.betas))

    @property
    def iterations(self):
        return len(self._distances)

    def __repr__(self):
        summary = {
            "iterations": self.iterations,
            "converged": self.converged,
            "d_top": self.distances[:, -1].tolist(),
            "residual": None if self.residual is None else self.residual.tolist(),
        }
        return "PicardDiagnostics(\n{}\n)".format(pprint.pformat(summary))

    def to_frame(self):
        """
        Long table with columns (n, beta, d_n, stderr, bound_n).
        """
        distances = self.distances
        n_iter, n_beta = distances.shape
        bounds = (
            np.repeat(self.bounds, n_beta)
            if self.bounds is not None
            else np.full(n_iter * n_beta, np.nan)
        )
        return pd.DataFrame(
            {
                "n": np.repeat(np.arange(n_iter), n_beta),
                "beta": np.tile(self.betas, n_iter),
                "d_n": distances.ravel(),
                "stderr": self.std_errors.ravel(),
                "bound_n": bounds,
            },
            columns=["n", "beta", "d_n", "stderr", "bound_n"],
        )


def _check_ensemble(ens, u0, ns, noise):
    if not (ens.config.id == u0.config_id == ns.config.id == noise.config.id):
        raise ConfigurationMismatchError(
            "ensemble, initial value, neighbours and noise must share one configuration"
        )
    if ens.grid != noise.grid or ens.M != noise.M:
        raise ValueError(
            "ensemble ({}, M={}) and noise ({}, M={}) do not match".format(
                ens.grid, ens.M, noise.grid, noise.M
            )
        )


def apply_T(ens, u0, V_drift, V_diff, ns, noise, workers=1):
    """
    Picard map: T(u)(t_k) = u0 + sum_{j<k} f(u(t_j)) dt + sum_{j<k} B(u(t_j)) dW_j
    for every replica, with the increments dW of the common noise bundle.

    Parameters
    ----------
    ens : ProcessEnsemble
        input processes
    u0 : WeightedSpinVector
        initial value
    V_drift, V_diff : InteractionFamily
        drift and diffusion interactions
    ns : NeighborStructure
        neighbours of the configuration
    noise : NoiseBundle
        common noise on the grid of `ens`
    workers : int, optional
        joblib workers, the result does not depend on it

    Returns
    -------
    ProcessEnsemble
    """
    _check_ensemble(ens, u0, ns, noise)
    dt = ens.grid.dt

    def image(start, stop):
        left = ens.paths[start:stop, :-1]
        increments = em_increment(
            field_values(V_drift, left, ns),
            field_values(V_diff, left, ns),
            dt,
            noise.increments[start:stop],
        )
        start_values = np.broadcast_to(u0.values, (stop - start, 1, len(u0)))
        # sequential accumulation, the same additions as the integrator
        return np.cumsum(np.concatenate([start_values, increments], axis=1), axis=1)

    paths = map_replicas(image, ens.M, workers)
    provenance = {"method": "picard", "noise_seed": noise.seed, "u0": u0.digest}
    return ProcessEnsemble(ens.config, ens.grid, paths, provenance)


def _distances(a, b, betas, p):
    return [zp_distance(a, b, beta, p) for beta in betas]


def picard_iterate(
    u0,
    V_drift,
    V_diff,
    ns,
    grid,
    noise,
    scale,
    p,
    n_max,
    tol,
    start=None,
    constants=None,
    workers=1,
):
    """
    Iterate the Picard map from the constant process u0 (or `start`) under
    common noise until d_n <= tol at every grid index or n_max maps
    were applied.

    Parameters
    ----------
    u0 : WeightedSpinVector
        initial value
    V_drift, V_diff : InteractionFamily
        drift and diffusion interactions
    ns : NeighborStructure
        neighbours of the configuration
    grid : TimeGrid
        time grid
    noise : NoiseBundle
        common noise, reused by every iteration
    scale : ScaleInterval
        indices at which the distances are measured
    p : float
        moment of the Z-norms
    n_max : int
        largest number of maps, >= 1
    tol : float
        tolerance, > 0
    start : ProcessEnsemble, optional
        alternative start iterate
    constants : ContractionConstants, optional
        constants used to fill the bound_n column
    workers : int, optional
        joblib workers

    Returns
    -------
    ensemble : ProcessEnsemble
        last iterate
    diagnostics : PicardDiagnostics
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1, got {}".format(n_max))
    if tol <= 0:
        raise ValueError("tol must be > 0, got {}".format(tol))

    current = start if start is not None else ProcessEnsemble.constant(u0, grid, noise.M)
    betas = scale.grid
    diagnostics = PicardDiagnostics(betas, p)

    for n in range(n_max):
        following = apply_T(current, u0, V_drift, V_diff, ns, noise, workers)
        estimates = _distances(current, following, betas, p)
        diagnostics.append(estimates)
        current = following
        logging.debug("picard iteration {}: d_n={}".format(n, estimates[-1].value))
        if max(e.value for e in estimates) <= tol:
            diagnostics.converged = True
            break

    if not diagnostics.converged:
        logging.warning(
            "picard iteration did not reach tol={} within {} maps (d={})".format(
                tol, n_max, diagnostics.distances[-1, -1]
            )
        )

    image = apply_T(current, u0, V_drift, V_diff, ns, noise, workers)
    residual = _distances(current, image, betas, p)
    diagnostics.residual = np.array([e.value for e in residual])
    diagnostics.residual_std_error = np.array([e.value_std_error for e in residual])

    if constants is not None:
        delta = scale.top - betas[0]
        diagnostics.bounds = (
            picard_bound(
                np.arange(diagnostics.iterations),
                p,
                constants.q,
                delta,
                constants.L,
                constants.T,
            )
            * diagnostics.distances[0, 0]
        )
    return current, diagnostics


def uniqueness_probe(
    u0, alt_start, V_drift, V_diff, ns, grid, noise, scale, p, n_max, tol, workers=1
):
    """
    Run the Picard iteration from u0 and from `alt_start` under the same noise
    and compare the two limits.

    Returns
    -------
    dict
        z_distance : Z_beta distance of the limits per grid index
        std_error : their standard errors
        converged : both runs converged
    """
    if alt_start.config.id != u0.config_id:
        raise ConfigurationMismatchError("alternative start lives on another configuration")
    first, diag_first = picard_iterate(
        u0, V_drift, V_diff, ns, grid, noise, scale, p, n_max, tol, workers=workers
    )
    second, diag_second = picard_iterate(
        u0,
        V_drift,
        V_diff,
        ns,
        grid,
        noise,
        scale,
        p,
        n_max,
        tol,
        start=alt_start,
        workers=workers,
    )
    estimates = _distances(first, second, scale.grid, p)
    return {
        "betas": scale.grid.copy(),
        "z_distance": np.array([e.value for e in estimates]),
        "std_error": np.array([e.value_std_error for e in estimates]),
        "converged": diag_first.converged and diag_second.converged,
    }


def certified_lipschitz(V_drift, V_diff, config, ns, scale, q):
    """
    Scale-Lipschitz constant valid for both the drift and the diffusion map on
    the grid of `scale`.
    """
    return max(
        scale_lipschitz_constant(V_drift, config, ns, scale, q),
        scale_lipschitz_constant(V_diff, config, ns, scale, q),
    )


def contraction_report(diag, constants, scale, p, q, T):
    """
    Compare the measured Picard distances with their bound
    picard_bound(n, p, q, beta - alpha, L, T) d_0(alpha), alpha the smallest
    grid index.

    Returns
    -------
    pandas.DataFrame
        columns (n, beta, d_n, bound_n, ratio, flagged); a row is flagged when
        d_n > bound_n + 3 stderr
    """
    if diag.iterations == 0:
        raise ValueError("diagnostics are empty")
    distances = diag.distances
    std_errors = diag.std_errors
    alpha = scale.grid[0]
    d_zero = distances[0, 0]
    n = np.arange(diag.iterations)
    rows = []
    for j, beta in enumerate(scale.grid):
        if beta <= alpha:
            continue
        bound = picard_bound(n, p, q, beta - alpha, constants.L, T) * d_zero
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(bound > 0, distances[:, j] / bound, 0.0)
        flagged = distances[:, j] > bound + 3.0 * std_errors[:, j]
        rows.append(
            pd.DataFrame(
                {
                    "n": n,
                    "beta": float(beta),
                    "d_n": distances[:, j],
                    "bound_n": bound,
                    "ratio": ratio,
                    "flagged": flagged,
                },
                columns=["n", "beta", "d_n", "bound_n", "ratio", "flagged"],
            )
        )
    table = pd.concat(rows, ignore_index=True)
    if table["flagged"].any():
        logging.warning(
            "{} Picard distances exceed their bound".format(int(table["flagged"].sum()))
        )
    return table


def cross_validate(
    u0,
    V_drift,
    V_diff,
    ns,
    T,
    n_steps_list,
    M,
    seed,
    beta,
    p,
    tol,
    n_max,
    workers=1,
):
    """
    Compare the Picard limit on a grid with n steps against the Euler-Maruyama
    path on the grid with 2n steps, both driven by one Brownian path.

    Parameters
    ----------
    u0 : WeightedSpinVector
        initial value
    V_drift, V_diff : InteractionFamily
        drift and diffusion interactions
    ns : NeighborStructure
        neighbours
    T : float
        horizon
    n_steps_list : list of int
        increasing coarse step counts, e.g. [64, 128]
    M : int
        replicas
    seed : int
        noise seed
    beta : float
        scale index of the gap
    p : float
        moment
    tol, n_max
        Picard settings
    workers : int, optional
        joblib workers

    Returns
    -------
    dict
        table : pandas.DataFrame (n_steps, gap, stderr, iterations); gap is
            the squared Z-norm distance (E ||.||_beta^p)^(2/p) of the two paths
        ratio : gap of the last over the previous grid, about 1/2
        deterministic_exact : without diffusion, the Picard iterate after
            n_steps maps equals the Euler-Maruyama path bit for bit
    """
    n_steps_list = sorted(int(n) for n in n_steps_list)
    finest = 2 * n_steps_list[-1]
    if any(finest % (2 * n) for n in n_steps_list):
        raise ValueError("step counts must divide {}".format(finest))
    fine_noise = generate_noise(u0.config, TimeGrid(T, finest), M, seed, workers)
    scale = ScaleInterval(beta, beta + 1.0, [beta])

    rows = []
    for n_steps in n_steps_list:
        coarse = fine_noise.coarsen(finest // n_steps)
        refined = fine_noise.coarsen(finest // (2 * n_steps))
        limit, diag = picard_iterate(
            u0,
            V_drift,
            V_diff,
            ns,
            coarse.grid,
            coarse,
            scale,
            p,
            n_max,
            tol,
            workers=workers,
        )
        reference = euler_maruyama(
            V_drift, V_diff, u0, ns, refined.grid, refined, workers
        ).at_times(2)
        distance = zp_distance(limit, reference, beta, p)
        # (E ||e||^p)^(2/p) scales like the step size for strong order 1/2
        rows.append(
            {
                "n_steps": n_steps,
                "gap": distance.value ** 2,
                "stderr": 2.0 * distance.value * distance.value_std_error,
                "iterations": diag.iterations,
            }
        )
    table = pd.DataFrame(rows, columns=["n_steps", "gap", "stderr", "iterations"])
    gaps = table["gap"].to_numpy()
    ratio = float(gaps[-1] / gaps[-2]) if len(gaps) > 1 and gaps[-2] > 0 else float("nan")

    # deterministic case on the coarsest grid
    n_steps = n_steps_list[0]
    no_diffusion = InteractionFamily(J=0.0, r=V_diff.r)
    coarse = fine_noise.coarsen(finest // n_steps)
    current = ProcessEnsemble.constant(u0, coarse.grid, 1)
    single = NoiseBundle(coarse.config, coarse.grid, coarse.seed, coarse.increments[:1])
    for _ in range(n_steps):
        current = apply_T(current, u0, V_drift, no_diffusion, ns, single)
    direct = euler_maruyama(V_drift, no_diffusion, u0, ns, coarse.grid, single)
    deterministic_exact = bool(np.array_equal(current.paths, direct.paths))

    return {"table": table, "ratio": ratio, "deterministic_exact": deterministic_exact}
