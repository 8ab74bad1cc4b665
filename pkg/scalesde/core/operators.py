import logging
import pprint
import numpy as np
import pandas as pd
from ..ops import loglog_fit
from ..utils import DegenerateGridError


class KernelSpec(object):
    """
    Kernel K(x, y) = a exp(-(beta_sup / p) |x - y|) (1 + |y|)^delta, the
    largest kernel allowed by the growth condition of the integral operator
    example.
    """

    def __init__(self, a, beta_sup, delta, p):
        if a <= 0:
            raise ValueError("a must be > 0, got {}".format(a))
        if delta < 0:
            raise ValueError("delta must be >= 0, got {}".format(delta))
        if p <= 1:
            raise ValueError("p must be > 1, got {}".format(p))
        self.a = float(a)
        self.beta_sup = float(beta_sup)
        self.delta = float(delta)
        self.p = float(p)

    def __repr__(self):
        return "{}(\n{}\n)".format(type(self).__name__, pprint.pformat(vars(self)))

    @property
    def q_pred(self):
        """
        Predicted exponent (p - 1) / (p delta), infinite for delta = 0.
        """
        if self.delta == 0:
            return float("inf")
        return (self.p - 1.0) / (self.p * self.delta)

    def kernel(self, x, y):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        return (
            self.a
            * np.exp(-(self.beta_sup / self.p) * np.abs(x - y))
            * (1.0 + np.abs(y)) ** self.delta
        )


class MatrixSpec(KernelSpec):
    """
    Truncated infinite matrix A_kj = a exp(-(beta_sup / p) |k - j|) (1 + |j|)^delta
    for |k|, |j| <= k_max.
    """

    def __init__(self, a, beta_sup, delta, p, k_max):
        super().__init__(a, beta_sup, delta, p)
        if int(k_max) < 1:
            raise ValueError("k_max must be >= 1, got {}".format(k_max))
        self.k_max = int(k_max)
        self._matrix = None

    def __repr__(self):
        params = {k: v for k, v in vars(self).items() if not k.startswith("_")}
        return "MatrixSpec(\n{}\n)".format(pprint.pformat(params))

    @property
    def indices(self):
        return np.arange(-self.k_max, self.k_max + 1)

    def matrix(self):
        if self._matrix is None:
            k = self.indices
            self._matrix = self.kernel(k[:, None], k[None, :])
        return self._matrix


class GridFunction(object):
    """
    Function values on the uniform grid x_i = i h, |x_i| <= x_max.
    """

    def __init__(self, x_max, h, values=None):
        if h <= 0:
            raise ValueError("grid spacing h must be > 0, got {}".format(h))
        n_half = int(round(x_max / h))
        self.h = float(h)
        self.x_max = n_half * self.h
        self.nodes = self.h * np.arange(-n_half, n_half + 1)
        if values is None:
            values = np.zeros_like(self.nodes)
        values = np.asarray(values, dtype=np.float64)
        if values.shape[0] != self.nodes.size:
            raise ValueError("values do not match the grid")
        self.values = values

    @classmethod
    def from_callable(cls, func, x_max, h):
        grid = cls(x_max, h)
        grid.values = np.asarray(func(grid.nodes), dtype=np.float64)
        return grid

    def compatible(self, other):
        return self.h == other.h and self.nodes.size == other.nodes.size

    def trapezoid_weights(self):
        weights = np.full(self.nodes.size, self.h)
        weights[[0, -1]] = self.h / 2.0
        return weights


def kernel_matrix(spec, grid):
    """
    Quadrature matrix K(x_i, x_j) w_j with trapezoid weights w_j.
    """
    return spec.kernel(grid.nodes[:, None], grid.nodes[None, :]) * grid.trapezoid_weights()


def kernel_apply(spec, u):
    """
    Integral operator Au(x) = int K(x, y) u(y) dy by trapezoidal quadrature at
    every node of the grid of `u`.

    Parameters
    ----------
    spec : KernelSpec
        kernel
    u : GridFunction
        function; `u.values` may carry extra trailing axes for several functions

    Returns
    -------
    GridFunction
    """
    return GridFunction(u.x_max, u.h, kernel_matrix(spec, u) @ u.values)


def weighted_lp_norm(u, alpha, p):
    """
    (sum_i h |u(x_i)|^p exp(-alpha |x_i|))^(1/p).
    """
    weights = u.h * np.exp(-alpha * np.abs(u.nodes))
    values = np.abs(u.values) ** p
    if values.ndim > 1:
        weights = weights[:, None]
    return (weights * values).sum(axis=0) ** (1.0 / p)


def matrix_apply(spec, u):
    """
    Truncated matrix-vector product (A u)_k = sum_{|j| <= k_max} A_kj u_j.
    """
    u = np.asarray(u, dtype=np.float64)
    if u.shape[0] != spec.indices.size:
        raise ValueError(
            "sequence of length {} does not match k_max {}".format(u.shape[0], spec.k_max)
        )
    return spec.matrix() @ u


def weighted_lp_sequence_norm(u, alpha, p, indices=None):
    """
    (sum_k |u_k|^p exp(-alpha |k|))^(1/p) for a sequence indexed by `indices`
    (default -K..K).
    """
    u = np.asarray(u, dtype=np.float64)
    if indices is None:
        k_max = (u.shape[0] - 1) // 2
        indices = np.arange(-k_max, k_max + 1)
    weights = np.exp(-alpha * np.abs(indices))
    values = np.abs(u) ** p
    if values.ndim > 1:
        weights = weights[:, None]
    return (weights * values).sum(axis=0) ** (1.0 / p)


def _sample_functions(rng, n_samples, reach):
    # localised bumps and oscillating dense functions, evaluated on any grid
    n_bumps = n_samples // 2
    centres = rng.uniform(-reach, reach, size=n_bumps)
    widths = rng.uniform(0.1, 0.5, size=n_bumps)
    freqs = rng.uniform(0.0, 3.0, size=n_samples - n_bumps)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=n_samples - n_bumps)

    def evaluate(x):
        x = x[:, None]
        bumps = np.exp(-0.5 * ((x - centres) / widths) ** 2)
        dense = np.cos(freqs * x + phases)
        return np.concatenate([bumps, dense], axis=1)

    return evaluate


def _ratio_table(apply, norm, samples, pairs):
    images = apply(samples)
    ratios = []
    for alpha, beta in pairs:
        ratio = norm(images, beta) / norm(samples, alpha)
        ratios.append(np.max(ratio))
    return np.array(ratios)


def singularity_fit(op_kind, spec, scale, n_samples, seed, h_start=0.5, h_min=1.0 / 32):
    """
    Fit the blow-up exponent of ||A u||_beta / ||u||_alpha as beta - alpha
    shrinks and compare it with the predicted exponent q = (p - 1) / (p delta).

    Parameters
    ----------
    op_kind : str
        `kernel` (integral operator on a quadrature grid) or `matrix`
    spec : KernelSpec or MatrixSpec
        operator
    scale : ScaleInterval
        at least 5 indices, alpha_star > 0 for the kernel
    n_samples : int
        number of sampled functions (or sequences)
    seed : int
        seed of the sampler
    h_start, h_min : float, optional
        first and smallest quadrature spacing of the refinement loop

    Returns
    -------
    dict
        q_emp, q_pred, slope, C (envelope constant), h and table, a
        pandas.DataFrame with columns (alpha, beta, ratio_max, bound, p, delta)
    """
    if op_kind not in ("kernel", "matrix"):
        raise ValueError("op_kind must be 'kernel' or 'matrix'")
    if len(scale) < 5:
        raise DegenerateGridError(
            "singularity_fit needs at least 5 scale indices, got {}".format(len(scale))
        )
    if spec.delta > (spec.p - 1.0) / spec.p:
        raise ValueError("delta must be <= (p - 1) / p so that q >= 1")
    if spec.beta_sup <= scale.alpha_sup:
        raise ValueError("beta_sup must exceed the largest scale index")

    rng = np.random.default_rng(seed)
    pairs = scale.pairs()
    p = spec.p
    h = None

    if op_kind == "kernel":
        if scale.alpha_star <= 0:
            raise ValueError("the kernel grid needs alpha_star > 0")
        x_max = float(np.ceil(8.0 * np.log(10.0) / scale.alpha_star))
        evaluate = _sample_functions(rng, n_samples, reach=x_max / 4.0)
        h = h_start
        previous = None
        while True:
            grid = GridFunction(x_max, h)
            matrix = kernel_matrix(spec, grid)
            samples = evaluate(grid.nodes)
            ratios = _ratio_table(
                lambda u: matrix @ u,
                lambda u, a: weighted_lp_norm(GridFunction(x_max, h, u), a, p),
                samples,
                pairs,
            )
            if previous is not None:
                change = np.max(np.abs(ratios - previous) / previous)
                if change < 0.01:
                    break
            if h / 2.0 < h_min:
                logging.warning(
                    "quadrature refinement stopped at h={} before reaching 1%".format(h)
                )
                break
            previous = ratios
            h = h / 2.0
    else:
        size = spec.indices.size
        samples = np.zeros((size, n_samples))
        n_unit = n_samples // 2
        samples[rng.integers(0, size, size=n_unit), np.arange(n_unit)] = 1.0
        samples[:, n_unit:] = rng.normal(size=(size, n_samples - n_unit))
        ratios = _ratio_table(
            lambda u: matrix_apply(spec, u),
            lambda u, a: weighted_lp_sequence_norm(u, a, p, spec.indices),
            samples,
            pairs,
        )

    deltas = np.array([beta - alpha for alpha, beta in pairs])
    slope, _ = loglog_fit(1.0 / deltas, ratios)
    slope = max(slope, 0.0) if np.isfinite(slope) else 0.0
    q_emp = 1.0 / slope if slope > 0 else float("inf")
    q_pred = spec.q_pred
    inverse_q = 0.0 if np.isinf(q_pred) else 1.0 / q_pred
    C = float(np.max(ratios * deltas ** inverse_q))
    table = pd.DataFrame(
        {
            "alpha": [alpha for alpha, _ in pairs],
            "beta": [beta for _, beta in pairs],
            "ratio_max": ratios,
            "bound": C * deltas ** (-inverse_q),
            "p": p,
            "delta": spec.delta,
        },
        columns=["alpha", "beta", "ratio_max", "bound", "p", "delta"],
    )
    return {
        "q_emp": q_emp,
        "q_pred": q_pred,
        "slope": float(slope),
        "C": C,
        "h": h,
        "table": table,
    }


def diagonal_blowup(a, beta_sup, delta, p, k_max_values):
    """
    Largest diagonal entry of the truncated matrices and its growth exponent
    in 1 + k_max.

    Returns
    -------
    dict
        table : pandas.DataFrame with columns (k_max, max_diag, predicted)
        exponent : fitted log-log slope of max_diag against 1 + k_max
    """
    rows = []
    for k_max in k_max_values:
        spec = MatrixSpec(a, beta_sup, delta, p, k_max)
        rows.append(
            {
                "k_max": int(k_max),
                "max_diag": float(np.max(np.abs(np.diag(spec.matrix())))),
                "predicted": a * (1.0 + k_max) ** delta,
            }
        )
    table = pd.DataFrame(rows, columns=["k_max", "max_diag", "predicted"])
    exponent, _ = loglog_fit(1.0 + table["k_max"].to_numpy(), table["max_diag"].to_numpy())
    return {"table": table, "exponent": exponent}
