import logging
import pprint
from dataclasses import dataclass
import numpy as np
import pandas as pd
from .scale import WeightedSpinVector
from .scale import weighted_norm
from ..ops import weighted_square_sums
from ..ops import loglog_fit
from ..utils import ConfigurationMismatchError
from ..utils import DegenerateGridError


class InteractionFamily(object):
    """
    Admissible pair interaction V_xy(a, b) = J w(|x - y|) g(b - a) with finite
    range r, plus an optional on-site term V_xx(a, a) = h - kappa a.

    Parameters
    ----------
    kind : str, optional
        coupling g: `clipped_linear` (clamp to [-1, 1]), `tanh_coupling` or
        `user_table` (piecewise linear through `table`)
    r : float, optional
        interaction range, > 0
    J : float, optional
        coupling strength
    profile : str, optional
        spatial profile w on [0, r): `linear` (1 - s/r), `quadratic`
        (1 - s/r)^2 or `constant` 1
    h : float, optional
        constant on-site field
    kappa : float, optional
        linear on-site restoring rate
    table : dict, optional
        {"x": [...], "y": [...]} with strictly increasing x, for `user_table`
    lipschitz_C : float, optional
        declared Lipschitz constant C. Defaults to max(|J| lip(g), |kappa|).
    """

    def __init__(
        self,
        kind="clipped_linear",
        r=1.5,
        J=1.0,
        profile="linear",
        h=0.0,
        kappa=0.0,
        table=None,
        lipschitz_C=None,
    ):
        if kind not in ("clipped_linear", "tanh_coupling", "user_table"):
            raise ValueError("unknown interaction kind '{}'".format(kind))
        if profile not in ("linear", "quadratic", "constant"):
            raise ValueError("unknown spatial profile '{}'".format(profile))
        if r <= 0:
            raise ValueError("interaction range must be > 0, got {}".format(r))

        self.kind = kind
        self.r = float(r)
        self.J = float(J)
        self.profile = profile
        self.h = float(h)
        self.kappa = float(kappa)
        self.table = None

        coupling_lipschitz = 1.0
        if kind == "user_table":
            if table is None:
                raise ValueError("user_table interactions need a table")
            x = np.asarray(table["x"], dtype=np.float64)
            y = np.asarray(table["y"], dtype=np.float64)
            if x.size < 2 or x.shape != y.shape or np.any(np.diff(x) <= 0):
                raise ValueError("table x must be strictly increasing and match y")
            self.table = {"x": x.tolist(), "y": y.tolist()}
            self._x, self._y = x, y
            coupling_lipschitz = float(np.max(np.abs(np.diff(y) / np.diff(x))))

        declared = max(abs(self.J) * coupling_lipschitz, abs(self.kappa))
        if lipschitz_C is None:
            # C must be > 0 even for a vanishing family
            lipschitz_C = declared if declared > 0 else 1.0
        self.lipschitz_C = float(lipschitz_C)

    @classmethod
    def from_dict(cls, block):
        return cls(**{k: v for k, v in block.items() if v is not None})

    def to_dict(self):
        return {
            "kind": self.kind,
            "r": self.r,
            "J": self.J,
            "profile": self.profile,
            "h": self.h,
            "kappa": self.kappa,
            "table": self.table,
            "lipschitz_C": self.lipschitz_C,
        }

    def __repr__(self):
        return "InteractionFamily(\n{}\n)".format(pprint.pformat(self.to_dict()))

    @property
    def has_onsite(self):
        return self.h != 0.0 or self.kappa != 0.0

    @property
    def is_zero(self):
        return self.J == 0.0 and not self.has_onsite

    def weight(self, s):
        """
        Spatial profile w(s), zero for s >= r.
        """
        s = np.asarray(s, dtype=np.float64)
        inside = s < self.r
        if self.profile == "constant":
            w = np.ones_like(s)
        else:
            w = np.clip(1.0 - s / self.r, 0.0, None)
            if self.profile == "quadratic":
                w = w * w
        return np.where(inside, w, 0.0)

    def coupling(self, d):
        """
        Coupling g applied to the spin difference b - a.
        """
        if self.kind == "clipped_linear":
            return np.clip(d, -1.0, 1.0)
        if self.kind == "tanh_coupling":
            return np.tanh(d)
        return np.interp(d, self._x, self._y)

    def pair(self, a, b, s):
        """
        V_xy(a, b) for sites at distance s.
        """
        return self.J * self.weight(s) * self.coupling(np.asarray(b) - np.asarray(a))

    def onsite(self, a):
        """
        V_xx(a, a) = h - kappa a.
        """
        return self.h - self.kappa * np.asarray(a, dtype=np.float64)


@dataclass
class GLProfile:
    """
    Constants of the scale-Lipschitz and linear-growth bounds
    ||F(u) - F(v)||_beta <= L (beta - alpha)^(-1/q) ||u - v||_alpha and
    ||F(u)||_beta <= K (beta - alpha)^(-1/q) (1 + ||u||_alpha).
    """

    q: float
    L: float
    K: float


class DiagonalDiffusion(object):
    """
    Diffusion operator acting on the per-site noise by multiplication with its
    diagonal. The operator is never materialised as a matrix.
    """

    def __init__(self, diagonal):
        self.diagonal = diagonal

    def apply(self, vector):
        if vector.config_id != self.diagonal.config_id:
            raise ConfigurationMismatchError("operator and vector configurations differ")
        return WeightedSpinVector(vector.config, self.diagonal.values * vector.values)

    def hs_norm(self, beta):
        """
        Hilbert-Schmidt norm into the space with index `beta`, equal to the
        weighted norm of the diagonal.
        """
        return weighted_norm(self.diagonal, beta)


def field_values(V, values, ns):
    """
    Evaluate x -> sum_{y in adj(x)} V_xy(v_x, v_y) (+ V_xx(v_x, v_x)) for raw
    arrays of spin values.

    Parameters
    ----------
    V : InteractionFamily
        interaction family
    values : numpy.ndarray
        spins with sites on the last axis, any leading (replica) axes
    ns : NeighborStructure
        neighbours with radius >= V.r

    Returns
    -------
    numpy.ndarray
        field with the same shape as `values`
    """
    if ns.r < V.r:
        raise ValueError(
            "neighbour radius {} is smaller than the interaction range {}".format(
                ns.r, V.r
            )
        )
    values = np.asarray(values, dtype=np.float64)
    field = np.zeros_like(values)
    if V.J != 0.0:
        idx, dist, mask = ns.padded()
        # columns in ascending neighbour order, identical for any batch shape
        for j in range(idx.shape[1]):
            terms = V.pair(values, values[..., idx[:, j]], dist[:, j])
            field += np.where(mask[:, j], terms, 0.0)
    if V.has_onsite:
        field += V.onsite(values)
    return field


def _check_config(sigma, ns):
    if sigma.config_id != ns.config.id:
        raise ConfigurationMismatchError(
            "spin vector and neighbour structure live on different configurations"
        )


def drift_field(V, sigma, ns):
    """
    Drift f_x(sigma) = sum_y V_xy(sigma_x, sigma_y) at every site.

    Parameters
    ----------
    V : InteractionFamily
        drift interaction
    sigma : WeightedSpinVector
        spins
    ns : NeighborStructure
        neighbour structure of the same configuration

    Returns
    -------
    WeightedSpinVector
    """
    _check_config(sigma, ns)
    return WeightedSpinVector(sigma.config, field_values(V, sigma.values, ns))


def diffusion_field(V, sigma, ns):
    """
    Diagonal B_x(sigma) = sum_y Psi_xy(sigma_x, sigma_y) of the diffusion
    operator. Wrap it in `DiagonalDiffusion` for the operator view.
    """
    _check_config(sigma, ns)
    return WeightedSpinVector(sigma.config, field_values(V, sigma.values, ns))


def admissibility_check(V, n_samples, seed):
    """
    Sample the Lipschitz ratio |V(a', b') - V(a'', b'')| / (|a' - a''| + |b' - b''|)
    inside the range and the values of V outside it.

    Parameters
    ----------
    V : InteractionFamily
        family to check
    n_samples : int
        number of sampled quadruples, >= 1
    seed : int
        seed of the sampler

    Returns
    -------
    dict
        C_emp : largest sampled ratio
        range_ok : V vanished at every sampled distance >= r
        lipschitz_ok : C_emp <= declared lipschitz_C
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1, got {}".format(n_samples))
    rng = np.random.default_rng(seed)
    a1, b1 = rng.normal(scale=2.0, size=(2, n_samples))
    # mix of small and large moves
    step = rng.normal(size=(2, n_samples)) * 10.0 ** rng.uniform(-3, 1, size=(2, n_samples))
    a2, b2 = a1 + step[0], b1 + step[1]
    s_in = rng.uniform(0.0, V.r, size=n_samples)
    s_out = rng.uniform(V.r, 3.0 * V.r, size=n_samples)

    denominator = np.abs(a1 - a2) + np.abs(b1 - b2)
    ratios = np.abs(V.pair(a1, b1, s_in) - V.pair(a2, b2, s_in)) / denominator
    if V.has_onsite:
        ratios = np.concatenate(
            [ratios, np.abs(V.onsite(a1) - V.onsite(a2)) / (2.0 * np.abs(a1 - a2))]
        )
    c_emp = float(np.max(ratios))
    range_ok = bool(np.all(V.pair(a1, b1, s_out) == 0.0))
    lipschitz_ok = c_emp <= V.lipschitz_C * (1.0 + 1e-12)
    if not (range_ok and lipschitz_ok):
        logging.warning(
            "interaction {} failed admissibility (C_emp={}, range_ok={})".format(
                V.kind, c_emp, range_ok
            )
        )
    return {"C_emp": c_emp, "range_ok": range_ok, "lipschitz_ok": lipschitz_ok}


def lipschitz_bound(V, config, ns, alpha, beta):
    """
    Explicit Lipschitz constant of the field map from the space with index
    `alpha` into the space with index `beta` on a finite configuration:

    L^2 = 2 C^2 max_y [ m_y^2 e^{-(beta-alpha)|y|} + s m_y e^{-(beta-alpha)|y|}
          + e^{alpha|y|} sum_{x in adj(y)} m_x e^{-beta|x|} ]

    with m = n + s and s = 1 when the family has an on-site term.

    Returns
    -------
    float
        L(alpha, beta)
    """
    if not alpha < beta:
        raise ValueError("lipschitz_bound needs alpha < beta")
    if len(config) == 0:
        return 0.0
    radii = config.radii
    s = 1.0 if V.has_onsite else 0.0
    m = ns.n + s
    decay = np.exp(-(beta - alpha) * radii)
    cross = np.exp(alpha * radii[ns.src] - beta * radii[ns.indices]) * m[ns.indices]
    neighbour_sum = np.bincount(ns.src, weights=cross, minlength=len(config))
    terms = m * m * decay + s * m * decay + neighbour_sum
    return float(np.sqrt(2.0) * V.lipschitz_C * np.sqrt(np.max(terms)))


def scale_lipschitz_constant(V, config, ns, scale, q):
    """
    Certified constant L of the scale-Lipschitz inequality on the grid:
    max over grid pairs of L(alpha, beta) (beta - alpha)^(1/q).
    """
    return max(
        lipschitz_bound(V, config, ns, alpha, beta) * (beta - alpha) ** (1.0 / q)
        for alpha, beta in scale.pairs()
    )


def _max_ratios(diff_in, diff_out, field_u, u, radii, pairs):
    ratio_max = np.zeros(len(pairs))
    growth_max = np.zeros(len(pairs))
    for i, (alpha, beta) in enumerate(pairs):
        num = np.sqrt(weighted_square_sums(diff_out, radii, beta))
        den = np.sqrt(weighted_square_sums(diff_in, radii, alpha))
        ratio_max[i] = np.max(np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0))
        growth = np.sqrt(weighted_square_sums(field_u, radii, beta)) / (
            1.0 + np.sqrt(weighted_square_sums(u, radii, alpha))
        )
        growth_max[i] = np.max(growth)
    return ratio_max, growth_max


def gl_exponent_fit(map_kind, V, config, ns, scale, n_pairs, seed, n_refine=8):
    """
    Empirical scale-Lipschitz exponent of the drift or diffusion map.

    For sampled pairs u, v the ratio ||F(u) - F(v)||_beta / ||u - v||_alpha is
    measured on every grid pair (alpha, beta) and on a ladder of pairs
    (top - delta_k, top) ending at the largest grid index, with
    delta_k = (top - second largest index) 2^-k. The exponent is fitted on the
    ladder as log rho = log L - (1/q) log(delta); with beta fixed only the gap
    varies along the ladder. The intercept is raised so that every measured
    ratio, grid pairs included, lies below the fitted envelope.

    Parameters
    ----------
    map_kind : str
        `drift` or `diffusion`
    V : InteractionFamily
        interaction of the map
    config : Configuration
        sites
    ns : NeighborStructure
        neighbours of `config`
    scale : ScaleInterval
        grid of at least 4 indices
    n_pairs : int
        number of sampled pairs, >= 8
    seed : int
        seed of the sampler
    n_refine : int, optional
        number of ladder pairs, >= 2

    Returns
    -------
    dict
        L_emp, q_emp, slope, K_emp, zero_map, profile (GLProfile) and table, a
        pandas.DataFrame with columns (alpha, beta, ratio_max, bound, fitted)
    """
    if map_kind not in ("drift", "diffusion"):
        raise ValueError("map_kind must be 'drift' or 'diffusion'")
    if len(scale) < 4:
        raise DegenerateGridError(
            "gl_exponent_fit needs at least 4 scale indices, got {}".format(len(scale))
        )
    if n_pairs < 8:
        raise ValueError("n_pairs must be >= 8, got {}".format(n_pairs))
    if n_refine < 2:
        raise ValueError("n_refine must be >= 2, got {}".format(n_refine))
    if ns.config.id != config.id:
        raise ConfigurationMismatchError("neighbour structure of another configuration")

    rng = np.random.default_rng(seed)
    n_sites = len(config)
    u = rng.normal(scale=0.5, size=(n_pairs, n_sites))
    direction = np.zeros((n_pairs, n_sites))
    # first half dense, second half localised at the sites nearest the origin
    n_dense = n_pairs // 2
    direction[:n_dense] = rng.normal(size=(n_dense, n_sites))
    if n_sites:
        nearest = np.argsort(config.radii, kind="stable")
        sites = nearest[np.arange(n_pairs - n_dense) % n_sites]
        direction[np.arange(n_dense, n_pairs), sites] = 1.0
    amplitude = 10.0 ** rng.uniform(-3, -1, size=(n_pairs, 1))
    v = u + amplitude * direction

    diff_in = u - v
    field_u = field_values(V, u, ns)
    diff_out = field_u - field_values(V, v, ns)
    radii = config.radii

    top = scale.top
    ladder = (top - scale.grid[-2]) * 2.0 ** -np.arange(n_refine, dtype=np.float64)
    pairs = scale.pairs() + [(top - delta, top) for delta in ladder]
    fitted = np.arange(len(pairs)) >= len(pairs) - n_refine
    ratio_max, growth_max = _max_ratios(diff_in, diff_out, field_u, u, radii, pairs)

    deltas = np.array([beta - alpha for alpha, beta in pairs])
    zero_map = bool(np.all(ratio_max == 0.0))
    if zero_map:
        slope = 0.0
    else:
        positive = fitted & (ratio_max > 0)
        slope, _ = loglog_fit(1.0 / deltas[positive], ratio_max[positive])
        if not np.isfinite(slope):
            slope = 0.0
        slope = max(slope, 0.0)
    q_emp = 1.0 / slope if slope > 0 else float("inf")
    L_emp = float(np.max(ratio_max * deltas ** slope))
    K_emp = float(np.max(growth_max * deltas ** slope))
    bound = L_emp * deltas ** (-slope)

    if zero_map:
        logging.info("{} map vanishes identically".format(map_kind))

    table = pd.DataFrame(
        {
            "alpha": [alpha for alpha, _ in pairs],
            "beta": [beta for _, beta in pairs],
            "ratio_max": ratio_max,
            "bound": bound,
            "fitted": fitted,
        },
        columns=["alpha", "beta", "ratio_max", "bound", "fitted"],
    )
    return {
        "map_kind": map_kind,
        "L_emp": L_emp,
        "q_emp": q_emp,
        "slope": float(slope),
        "K_emp": K_emp,
        "zero_map": zero_map,
        "profile": GLProfile(q=q_emp, L=L_emp, K=K_emp),
        "table": table,
    }
