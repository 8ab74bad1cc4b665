import logging
from dataclasses import dataclass, field
import numpy as np
import pandas as pd
from .dynamics import increment_moment
from ..ops import log_factorial
from ..ops import loglog_fit
from ..utils import HypothesisError
from ..utils import SeriesDivergenceError


def _check_domain(p, L, T):
    if p < 2:
        raise ValueError("p must be >= 2, got {}".format(p))
    if L < 0:
        raise ValueError("L must be >= 0, got {}".format(L))
    if T <= 0:
        raise ValueError("T must be > 0, got {}".format(T))


def hat_L(p, L, T):
    """
    Constant of the one-step estimate of the Picard map:
    (T^(p-1) + [p/2 (p-1)]^p T^(p/2-1)) 2^(p-1) L^p.

    Parameters
    ----------
    p : float
        moment, >= 2
    L : float
        scale-Lipschitz constant, >= 0
    T : float
        horizon, > 0

    Returns
    -------
    float
    """
    _check_domain(p, L, T)
    bracket = T ** (p - 1.0) + (p / 2.0 * (p - 1.0)) ** p * T ** (p / 2.0 - 1.0)
    return float(bracket * 2.0 ** (p - 1.0) * L ** p)


def a_p(p):
    """
    a_p = 2^(p-1) ((p/2)^(p/2) (p-1) + 1).
    """
    if p < 2:
        raise ValueError("p must be >= 2, got {}".format(p))
    return float(2.0 ** (p - 1.0) * ((p / 2.0) ** (p / 2.0) * (p - 1.0) + 1.0))


def a_T(p, L, T):
    """
    Upper bound a(T) of (hat_L(T) T)^(1/p): a_p L T for T >= 1 and
    a_p L sqrt(T) for T < 1.
    """
    _check_domain(p, L, T)
    if T >= 1:
        return a_p(p) * L * T
    return a_p(p) * L * np.sqrt(T)


@dataclass
class ContractionConstants:
    """
    Constants entering the Picard estimates. `hat_L`, `a_T` and `theta` are
    derived from (p, q, L, T).
    """

    p: float
    q: float
    L: float
    T: float
    hat_L: float = field(init=False)
    a_T: float = field(init=False)
    theta: float = field(init=False)

    def __post_init__(self):
        self.hat_L = hat_L(self.p, self.L, self.T)
        self.a_T = a_T(self.p, self.L, self.T)
        self.theta = 1.0 / self.q
        if self.q <= self.p:
            logging.warning(
                "q={} <= p={}: the Picard bounds do not converge".format(self.q, self.p)
            )


def _log_series_terms(n, t, eps, theta, p):
    n = np.asarray(n, dtype=np.float64)
    with np.errstate(divide="ignore"):
        n_log_n = np.where(n > 0, n * np.log(np.where(n > 0, n, 1.0)), 0.0)
        return (
            n * np.log(t)
            - theta * n * np.log(eps)
            + theta * n_log_n
            - log_factorial(n) / p
        )


def E_series_term(n, t, eps, theta, p):
    """
    Term t^n eps^(-theta n) n^(theta n) / (n!)^(1/p) of the series E^(p).
    """
    if t == 0:
        return np.where(np.asarray(n) == 0, 1.0, 0.0)
    return np.exp(_log_series_terms(n, t, eps, theta, p))


def E_series(t, eps, theta, p, tail_tol=1e-12, max_terms=100000):
    """
    Evaluate E^(p)(t, eps, theta) = 1 + sum_{n>=1} t^n eps^(-theta n)
    n^(theta n) / (n!)^(1/p).

    The partial sum stops at the first index n where the bound
    rho_n = (t / eps^theta) e^theta (n+1)^(theta - 1/p) on all later term
    ratios is below 1/2 and the geometric tail a_n rho_n / (1 - rho_n) is
    below `tail_tol`.

    Parameters
    ----------
    t : float
        argument, >= 0
    eps : float
        > 0
    theta : float
        in [0, 1/p)
    p : float
        > 0
    tail_tol : float, optional
        absolute bound on the neglected tail
    max_terms : int, optional
        largest number of terms

    Returns
    -------
    value : float
    terms : int
        number of summed terms after the leading 1
    """
    if t < 0:
        raise ValueError("t must be >= 0, got {}".format(t))
    if eps <= 0:
        raise ValueError("eps must be > 0, got {}".format(eps))
    if theta < 0:
        raise ValueError("theta must be >= 0, got {}".format(theta))
    if theta >= 1.0 / p:
        raise SeriesDivergenceError(
            "series needs theta < 1/p, got theta={} and p={}".format(theta, p)
        )
    if tail_tol <= 0:
        raise ValueError("tail_tol must be > 0")
    if t == 0:
        return 1.0, 0

    n = np.arange(1, max_terms + 1, dtype=np.float64)
    terms = np.exp(_log_series_terms(n, t, eps, theta, p))
    rho = (t / eps ** theta) * np.exp(theta) * (n + 1.0) ** (theta - 1.0 / p)
    with np.errstate(divide="ignore", invalid="ignore"):
        tail = np.where(rho < 1.0, terms * rho / (1.0 - rho), np.inf)
    stop = np.flatnonzero((rho < 0.5) & (tail < tail_tol))
    if stop.size == 0:
        raise SeriesDivergenceError(
            "series did not reach the tail tolerance within {} terms".format(max_terms)
        )
    count = int(stop[0]) + 1
    return float(1.0 + np.cumsum(terms[:count])[-1]), count


def picard_bound(n, p, q, delta, L, T):
    """
    Z-norm bound of the n-th Picard difference relative to the first one:
    [n^(n p/q) / n! (hat_L(T) T / delta^(p/q))^n]^(1/p), evaluated in log
    domain.

    Parameters
    ----------
    n : int or array_like
        iteration index, >= 0
    p, q : float
        moment p in [2, q)
    delta : float
        beta - alpha, > 0
    L : float
        scale-Lipschitz constant
    T : float
        horizon

    Returns
    -------
    float or numpy.ndarray
    """
    if delta <= 0:
        raise ValueError("delta must be > 0, got {}".format(delta))
    if q <= p:
        raise HypothesisError("picard_bound needs p < q, got p={} and q={}".format(p, q))
    n_arr = np.asarray(n, dtype=np.float64)
    if np.any(n_arr < 0):
        raise ValueError("n must be >= 0")
    constant = hat_L(p, L, T) * T
    with np.errstate(divide="ignore", invalid="ignore"):
        n_log_n = np.where(n_arr > 0, n_arr * np.log(np.where(n_arr > 0, n_arr, 1.0)), 0.0)
        log_bound = (
            (p / q) * n_log_n
            - log_factorial(n_arr)
            + n_arr * (np.log(constant) - (p / q) * np.log(delta))
        )
    # 0^0 = 1 for n = 0 and L = 0
    log_bound = np.where(n_arr == 0, 0.0, log_bound)
    bound = np.exp(log_bound / p)
    if np.ndim(n) == 0:
        return float(bound)
    return bound


def cauchy_tail_bound(n, m, p, q, delta, L, T):
    """
    sum_{k=n}^m (hat_L(T) T)^(k/p) delta^(-k/q) k^(k/q) / (k!)^(1/p), the
    bound on the distance of two Picard iterates relative to the first
    difference.
    """
    if not 0 <= n <= m:
        raise ValueError("cauchy_tail_bound needs 0 <= n <= m")
    if delta <= 0:
        raise ValueError("delta must be > 0, got {}".format(delta))
    if q <= p:
        raise HypothesisError("cauchy_tail_bound needs p < q")
    k = np.arange(n, m + 1, dtype=np.float64)
    constant = hat_L(p, L, T) * T
    if constant == 0:
        return 1.0 if n == 0 else 0.0
    theta = 1.0 / q
    terms = E_series_term(k, constant ** (1.0 / p), delta, theta, p)
    return float(np.cumsum(terms)[-1])


def growth_bound(p, q, L, T, delta, u0_norm, tail_tol=1e-12):
    """
    Bound E^(p)((hat_L(T) T)^(1/p), delta, 1/q) (1 + ||u0||)^p on the Z-norm
    of the solution.
    """
    if q <= p:
        raise HypothesisError(
            "growth bound needs p in [2, q), got p={} and q={}".format(p, q)
        )
    if delta <= 0:
        raise ValueError("delta must be > 0, got {}".format(delta))
    t = (hat_L(p, L, T) * T) ** (1.0 / p)
    value, _ = E_series(t, delta, 1.0 / q, p, tail_tol)
    return value * (1.0 + u0_norm) ** p


def kolmogorov_constant(p, L, T, z_norm):
    """
    k(xi, T) = (T^(p/2) + [p/2 (p-1)]^(p/2)) 2^(p-1) L^p ||xi||^p.
    """
    _check_domain(p, L, T)
    bracket = T ** (p / 2.0) + (p / 2.0 * (p - 1.0)) ** (p / 2.0)
    return float(bracket * 2.0 ** (p - 1.0) * L ** p * z_norm ** p)


def kolmogorov_fit(ens, beta, p, pair_budget, seed=0):
    """
    Fit the exponent of the increment moments E ||xi(t) - xi(s)||_beta^p
    against |t - s| on sampled index pairs.

    Parameters
    ----------
    ens : ProcessEnsemble
        ensemble with at least 8 grid times
    beta : float
        scale index
    p : float
        moment
    pair_budget : int
        largest number of index pairs; all pairs are used if there are fewer
    seed : int, optional
        seed of the pair sampler

    Returns
    -------
    dict
        slope (nan if degenerate), k_emp, degenerate and table, a
        pandas.DataFrame with columns (s_idx, t_idx, lag, moment)
    """
    n_times = ens.grid.n_steps + 1
    if n_times < 8:
        raise ValueError("kolmogorov_fit needs >= 8 grid times, got {}".format(n_times))
    s_all, t_all = np.triu_indices(n_times, k=1)
    if s_all.size > pair_budget:
        rng = np.random.default_rng(seed)
        chosen = np.sort(rng.choice(s_all.size, size=int(pair_budget), replace=False))
        s_all, t_all = s_all[chosen], t_all[chosen]

    moments = np.array(
        [increment_moment(ens, s, t, beta, p) for s, t in zip(s_all, t_all)]
    )
    lags = ens.grid.times[t_all] - ens.grid.times[s_all]
    table = pd.DataFrame(
        {"s_idx": s_all, "t_idx": t_all, "lag": lags, "moment": moments},
        columns=["s_idx", "t_idx", "lag", "moment"],
    )
    positive = moments > 0
    degenerate = bool(positive.sum() < 2 or np.ptp(lags[positive]) == 0)
    if degenerate:
        logging.info("constant ensemble, increment exponent undefined")
        return {"slope": float("nan"), "k_emp": 0.0, "degenerate": True, "table": table}
    slope, _ = loglog_fit(lags[positive], moments[positive])
    k_emp = float(np.max(moments / lags ** (p / 2.0)))
    return {"slope": slope, "k_emp": k_emp, "degenerate": False, "table": table}


def bound_table(ns, p, q, delta, L, T):
    """
    Table of picard_bound values with columns (n, p, q, delta, L, T, bound).
    """
    ns = np.asarray(ns, dtype=np.int64)
    return pd.DataFrame(
        {
            "n": ns,
            "p": float(p),
            "q": float(q),
            "delta": float(delta),
            "L": float(L),
            "T": float(T),
            "bound": picard_bound(ns, p, q, delta, L, T),
        },
        columns=["n", "p", "q", "delta", "L", "T", "bound"],
    )


def series_table(ts, eps, theta, p, tail_tol=1e-12):
    """
    Table of E_series values with columns (t, eps, theta, p, E_value, terms).
    """
    rows = []
    for t in ts:
        value, terms = E_series(t, eps, theta, p, tail_tol)
        rows.append(
            {
                "t": float(t),
                "eps": float(eps),
                "theta": float(theta),
                "p": float(p),
                "E_value": value,
                "terms": terms,
            }
        )
    return pd.DataFrame(rows, columns=["t", "eps", "theta", "p", "E_value", "terms"])
