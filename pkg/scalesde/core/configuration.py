import hashlib
import logging
import pprint
import json
from dataclasses import dataclass
import numpy as np
import pandas as pd
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path
from scipy.spatial.distance import cdist
from ..ops import cell_list_pairs
from ..ops import csr_from_pairs
from ..ops import pad_rows
from ..utils import serialize_as_json


class Configuration(object):
    """
    Finite set of distinct particle positions in the box [-R, R]^d. Positions
    are quenched: only the spins attached to them evolve.

    Parameters
    ----------
    points : array_like
        array of shape (N, d)
    box_halfwidth : float
        half width R of the box
    dim : int, optional
        dimension d, inferred from `points` if it has any rows
    seed : int, optional
        seed the configuration was sampled with, 0 for non-random kinds
    kind : str, optional
        one of poisson, hardcore, lattice, explicit
    hc_radius : float, optional
        hard-core radius, required for kind hardcore
    """

    def __init__(
        self, points, box_halfwidth, dim=None, seed=0, kind="explicit", hc_radius=None
    ):
        points = np.array(points, dtype=np.float64)
        if dim is None:
            if points.ndim != 2:
                raise ValueError("cannot infer the dimension of an empty point list")
            dim = points.shape[1]
        dim = int(dim)
        if dim < 1:
            raise ValueError("dimension must be >= 1, got {}".format(dim))
        points = points.reshape(-1, dim)
        box_halfwidth = float(box_halfwidth)
        if box_halfwidth <= 0:
            raise ValueError("box half width must be > 0, got {}".format(box_halfwidth))
        if kind not in ("poisson", "hardcore", "lattice", "explicit"):
            raise ValueError("unknown configuration kind '{}'".format(kind))

        if np.any(np.abs(points) > box_halfwidth):
            raise ValueError("points must lie inside the box [-R, R]^d")
        if len(points) > 1 and np.unique(points, axis=0).shape[0] != len(points):
            raise ValueError("points must be pairwise distinct")
        if kind == "hardcore":
            if hc_radius is None or hc_radius <= 0:
                raise ValueError("hard-core configurations need hc_radius > 0")
            src, _, _ = cell_list_pairs(points, box_halfwidth, hc_radius)
            if src.size:
                raise ValueError(
                    "points closer than the hard-core radius {}".format(hc_radius)
                )

        self.dim = dim
        self.box_halfwidth = box_halfwidth
        self.points = points
        self.seed = int(seed)
        self.kind = kind
        self.hc_radius = None if hc_radius is None else float(hc_radius)
        self.points.setflags(write=False)
        self._radii = None
        self._id = None

    def __len__(self):
        return self.points.shape[0]

    def __repr__(self):
        summary = {
            "dim": self.dim,
            "box_halfwidth": self.box_halfwidth,
            "kind": self.kind,
            "seed": self.seed,
            "n_sites": len(self),
            "id": self.id[:12],
        }
        return "Configuration(\n{}\n)".format(pprint.pformat(summary))

    @property
    def radii(self):
        """
        Euclidean norm |x| of every site position.
        """
        if self._radii is None:
            self._radii = np.sqrt(np.einsum("ij,ij->i", self.points, self.points))
            self._radii.setflags(write=False)
        return self._radii

    @property
    def id(self):
        """
        Content hash of dimension, box and point coordinates.
        """
        if self._id is None:
            digest = hashlib.sha256()
            digest.update("{}|{!r}|".format(self.dim, self.box_halfwidth).encode())
            digest.update(np.ascontiguousarray(self.points).tobytes())
            self._id = digest.hexdigest()
        return self._id

    def to_dict(self):
        """
        Convert the configuration to the JSON document
        {dim, box_halfwidth, seed, kind, points}.
        """
        config = {
            "dim": self.dim,
            "box_halfwidth": self.box_halfwidth,
            "seed": self.seed,
            "kind": self.kind,
            "points": self.points.tolist(),
        }
        if self.hc_radius is not None:
            config["hc_radius"] = self.hc_radius
        return config

    @classmethod
    def from_dict(cls, data):
        return cls(
            data["points"],
            data["box_halfwidth"],
            dim=data["dim"],
            seed=data.get("seed", 0),
            kind=data.get("kind", "explicit"),
            hc_radius=data.get("hc_radius"),
        )

    def to_json(self, fp=None, pretty=False):
        return serialize_as_json(self.to_dict(), fp, pretty=pretty)

    @classmethod
    def from_json(cls, fp):
        with open(fp) as f:
            return cls.from_dict(json.load(f))


class NeighborStructure(object):
    """
    Radius-r adjacency of a configuration in compressed row form. Row x holds
    the sites y != x with |x - y| < r in ascending index order.

    Attributes
    ----------
    r : float
        interaction radius
    indptr, indices, dist : numpy.ndarray
        compressed rows with the distance of each stored pair
    n : numpy.ndarray
        n_x, the number of neighbours of each site
    N : numpy.ndarray
        N_y, the sum of n_x over the neighbours x of y
    """

    def __init__(self, config, r, src, dst, dist):
        self.config = config
        self.r = float(r)
        self.src = src
        self.indices = dst
        self.dist = dist
        self.indptr = csr_from_pairs(src, dst, len(config))
        self.n = np.diff(self.indptr)
        self.N = np.bincount(src, weights=self.n[dst], minlength=len(config)).astype(
            np.int64
        )
        self._padded = None

    def __repr__(self):
        summary = {
            "r": self.r,
            "n_sites": len(self.config),
            "n_pairs": int(self.indices.size),
            "max_n": int(self.n.max()) if self.n.size else 0,
        }
        return "NeighborStructure(\n{}\n)".format(pprint.pformat(summary))

    def adjacency(self, site):
        """
        Sorted neighbour indices of `site`.
        """
        return self.indices[self.indptr[site] : self.indptr[site + 1]]

    def padded(self):
        """
        Fixed-width neighbour table.

        Returns
        -------
        idx : numpy.ndarray
            integer array (N, D), D the largest n_x
        dist : numpy.ndarray
            distances, 0 in unused slots
        mask : numpy.ndarray
            boolean array (N, D) marking the used slots
        """
        if self._padded is None:
            self._padded = pad_rows(self.indptr, self.indices, self.dist)
        return self._padded

    def to_csr(self):
        n_sites = len(self.config)
        return csr_matrix(
            (np.ones(self.indices.size), self.indices, self.indptr),
            shape=(n_sites, n_sites),
        )

    def hop_distances(self, site):
        """
        Graph distance from `site` to every site in the r-neighbour graph,
        `inf` for unreachable sites.
        """
        return shortest_path(
            self.to_csr(), directed=False, unweighted=True, indices=int(site)
        )


@dataclass
class RegularityFit:
    """
    Smallest constants a_fit, c_log_fit with n_x <= a_fit (1 + |x|)^(1/q) and
    n_x <= c_log_fit [1 + log(1 + |x|)] r^d for every site of the configuration.
    """

    q: float
    a_fit: float
    c_log_fit: float
    worst_site: object
    worst_site_log: object = None


def sample_poisson(dim, box_halfwidth, intensity, seed):
    """
    Sample a homogeneous Poisson configuration in [-R, R]^d.

    Parameters
    ----------
    dim : int
        dimension d
    box_halfwidth : float
        half width R of the box
    intensity : float
        expected number of points per unit volume, >= 0
    seed : int
        unsigned 64-bit seed

    Returns
    -------
    Configuration
    """
    if intensity < 0:
        raise ValueError("intensity must be >= 0, got {}".format(intensity))
    rng = np.random.default_rng(seed)
    points = _poisson_points(rng, dim, box_halfwidth, intensity)
    return Configuration(points, box_halfwidth, dim=dim, seed=seed, kind="poisson")


def _poisson_points(rng, dim, box_halfwidth, intensity):
    count = rng.poisson(intensity * (2.0 * box_halfwidth) ** dim)
    return rng.uniform(-box_halfwidth, box_halfwidth, size=(count, dim))


def sample_hardcore(dim, box_halfwidth, intensity, hc_radius, seed):
    """
    Hard-core configuration by Matern-II thinning: every Poisson point gets a
    uniform mark and is deleted when a point with a smaller mark lies within
    `hc_radius`.

    Parameters
    ----------
    dim : int
        dimension d
    box_halfwidth : float
        half width R of the box
    intensity : float
        intensity of the underlying Poisson configuration
    hc_radius : float
        hard-core radius, > 0
    seed : int
        unsigned 64-bit seed

    Returns
    -------
    Configuration
    """
    if intensity < 0:
        raise ValueError("intensity must be >= 0, got {}".format(intensity))
    if hc_radius <= 0:
        raise ValueError("hc_radius must be > 0, got {}".format(hc_radius))
    rng = np.random.default_rng(seed)
    points = _poisson_points(rng, dim, box_halfwidth, intensity)
    marks = rng.uniform(size=points.shape[0])

    src, dst, _ = cell_list_pairs(points, box_halfwidth, hc_radius)
    deleted = np.zeros(points.shape[0], dtype=bool)
    deleted[src[marks[dst] < marks[src]]] = True
    if deleted.any():
        logging.info(
            "hard-core thinning removed {} of {} points".format(
                int(deleted.sum()), points.shape[0]
            )
        )
    return Configuration(
        points[~deleted],
        box_halfwidth,
        dim=dim,
        seed=seed,
        kind="hardcore",
        hc_radius=hc_radius,
    )


def lattice_configuration(dim, box_halfwidth, spacing=1.0):
    """
    Cubic lattice spacing * Z^d restricted to [-R, R]^d, sites in lexicographic
    order.
    """
    if spacing <= 0:
        raise ValueError("spacing must be > 0, got {}".format(spacing))
    n_half = int(np.floor(box_halfwidth / spacing + 1e-12))
    axis = spacing * np.arange(-n_half, n_half + 1, dtype=np.float64)
    mesh = np.meshgrid(*([axis] * dim), indexing="ij")
    points = np.stack([m.ravel() for m in mesh], axis=1)
    return Configuration(points, box_halfwidth, dim=dim, kind="lattice")


def explicit_configuration(points, box_halfwidth):
    return Configuration(points, box_halfwidth, kind="explicit")


def build_neighbors(config, r):
    """
    Build the radius-r adjacency with cell lists of edge >= r.

    Parameters
    ----------
    config : Configuration
        sites to connect
    r : float
        interaction radius, > 0; pairs with |x - y| < r are neighbours

    Returns
    -------
    NeighborStructure
    """
    if r <= 0:
        raise ValueError("interaction radius must be > 0, got {}".format(r))
    src, dst, dist = cell_list_pairs(config.points, config.box_halfwidth, r)
    return NeighborStructure(config, r, src, dst, dist)


def brute_force_neighbors(config, r):
    """
    O(N^2) reference for `build_neighbors` based on the full distance matrix.
    """
    if r <= 0:
        raise ValueError("interaction radius must be > 0, got {}".format(r))
    distances = cdist(config.points, config.points)
    within = distances < r
    np.fill_diagonal(within, False)
    src, dst = np.nonzero(within)
    return NeighborStructure(config, r, src, dst, distances[src, dst])


def regularity_fit(ns, config, q):
    """
    Fit the growth constants of the neighbour counts n_x over the sites of the
    configuration.

    Parameters
    ----------
    ns : NeighborStructure
        neighbour structure of `config`
    config : Configuration
        the configuration
    q : float
        exponent, > 2

    Returns
    -------
    RegularityFit
        a_fit = max_x n_x / (1 + |x|)^(1/q) and
        c_log_fit = max_x n_x / ([1 + log(1 + |x|)] r^d) with their argmax sites
    """
    if q <= 2:
        raise ValueError("regularity exponent q must be > 2, got {}".format(q))
    if len(config) == 0:
        return RegularityFit(q=q, a_fit=0.0, c_log_fit=0.0, worst_site=None)

    radii = config.radii
    ratio = ns.n / (1.0 + radii) ** (1.0 / q)
    ratio_log = ns.n / ((1.0 + np.log1p(radii)) * ns.r ** config.dim)
    worst = int(np.argmax(ratio))
    worst_log = int(np.argmax(ratio_log))
    return RegularityFit(
        q=q,
        a_fit=float(ratio[worst]),
        c_log_fit=float(ratio_log[worst_log]),
        worst_site=worst,
        worst_site_log=worst_log,
    )


def regularity_stability(dim, halfwidths, intensity, r, q, seeds):
    """
    Poisson regularity fits over several box half widths and seeds.

    Parameters
    ----------
    dim : int
        dimension d
    halfwidths : list of float
        box half widths R to compare
    intensity : float
        Poisson intensity
    r : float
        interaction radius
    q : float
        regularity exponent
    seeds : list of int
        seeds, reused for every half width

    Returns
    -------
    dict
        table : pandas.DataFrame with columns
            (box_halfwidth, seed, n_sites, max_n, a_fit, c_log_fit)
        mean_c_log : dict mapping each half width to the seed-averaged c_log_fit
        ratio : float, max over min of the seed averaged c_log_fit
    """
    rows = []
    for box_halfwidth in halfwidths:
        for seed in seeds:
            config = sample_poisson(dim, box_halfwidth, intensity, seed)
            ns = build_neighbors(config, r)
            fit = regularity_fit(ns, config, q)
            rows.append(
                {
                    "box_halfwidth": float(box_halfwidth),
                    "seed": int(seed),
                    "n_sites": len(config),
                    "max_n": int(ns.n.max()) if len(config) else 0,
                    "a_fit": fit.a_fit,
                    "c_log_fit": fit.c_log_fit,
                }
            )
    table = pd.DataFrame(
        rows,
        columns=["box_halfwidth", "seed", "n_sites", "max_n", "a_fit", "c_log_fit"],
    )
    mean_c_log = {
        float(box_halfwidth): float(
            table.loc[table["box_halfwidth"] == box_halfwidth, "c_log_fit"].mean()
        )
        for box_halfwidth in halfwidths
    }
    values = np.array(list(mean_c_log.values()))
    ratio = float(values.max() / values.min()) if values.min() > 0 else float("inf")
    return {"table": table, "mean_c_log": mean_c_log, "ratio": ratio}
