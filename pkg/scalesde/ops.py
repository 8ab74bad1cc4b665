import itertools
import numpy as np
from joblib import Parallel
from joblib import delayed
from scipy.special import gammaln


def weighted_square_sums(values, radii, alpha):
    """
    Sum of squared values weighted with `exp(-alpha * |x|)` over the last axis.
    This is the squared norm of the weighted sequence spaces, evaluated for any
    number of leading (replica, time) axes at once.

    Parameters
    ----------
    values : numpy.ndarray
        array with sites on the last axis
    radii : numpy.ndarray
        1-dimensional array with the Euclidean norm of each site position
    alpha : float
        index of the scale

    Returns
    -------
    numpy.ndarray
        array with the last axis reduced
    """
    weights = np.exp(-alpha * np.asarray(radii, dtype=np.float64))
    return (np.square(values) * weights).sum(axis=-1)


def ordered_mean(array, axis=0):
    """
    Mean over `axis`, accumulated strictly in ascending index order. Unlike
    numpy's pairwise summation, the result does not depend on how the array was
    assembled, which keeps replica reductions bit-stable.

    Parameters
    ----------
    array : numpy.ndarray
        array to reduce
    axis : int, optional
        axis to average over, by default 0

    Returns
    -------
    numpy.ndarray
        mean with `axis` removed
    """
    array = np.asarray(array, dtype=np.float64)
    count = array.shape[axis]
    total = np.cumsum(array, axis=axis).take(-1, axis=axis)
    return total / count


def cell_indices(points, box_halfwidth, cell_size):
    """
    Assign each point to a cell of a regular grid covering [-R, R]^d.

    Parameters
    ----------
    points : numpy.ndarray
        array of shape (N, d)
    box_halfwidth : float
        half width R of the box
    cell_size : float
        edge length of the cells, should be at least the search radius

    Returns
    -------
    cells : numpy.ndarray
        integer array of shape (N, d) with the cell coordinates of each point
    shape : tuple
        number of cells along each dimension
    """
    dim = points.shape[1]
    n_cells = max(1, int(np.floor(2.0 * box_halfwidth / cell_size)))
    shape = (n_cells,) * dim
    # floor keeps the cell edge >= cell_size, so neighbours are at most one cell away
    cells = np.floor((points + box_halfwidth) / (2.0 * box_halfwidth) * n_cells)
    cells = np.clip(cells.astype(np.int64), 0, n_cells - 1)
    return cells, shape


def ragged_ranges(starts, counts):
    """
    Concatenate `range(starts[i], starts[i] + counts[i])` for all i without a
    python loop.

    Parameters
    ----------
    starts : numpy.ndarray
        first index of each range
    counts : numpy.ndarray
        length of each range

    Returns
    -------
    numpy.ndarray
        concatenated indices
    """
    counts = np.asarray(counts, dtype=np.int64)
    total = int(counts.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64)
    offsets = np.cumsum(counts) - counts
    return np.arange(total, dtype=np.int64) - np.repeat(offsets - starts, counts)


def pair_distances(points, src, dst):
    """
    Euclidean distances between the points of each (src, dst) pair. The
    expression is symmetric in its arguments bit for bit.
    """
    diff = points[src] - points[dst]
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))


def cell_list_pairs(points, box_halfwidth, r):
    """
    Find all ordered pairs of distinct points with distance smaller than `r`
    using cell lists with a cell edge of at least `r`. Each point is only
    compared with the points in its own and the 3^d - 1 adjacent cells.

    Parameters
    ----------
    points : numpy.ndarray
        array of shape (N, d)
    box_halfwidth : float
        all points lie in [-box_halfwidth, box_halfwidth]^d
    r : float
        interaction radius (strict inequality)

    Returns
    -------
    src : numpy.ndarray
        index of the first point of each pair, sorted ascending
    dst : numpy.ndarray
        index of the second point, sorted ascending within each `src`
    dist : numpy.ndarray
        distance of each pair
    """
    n_points, dim = points.shape
    empty = (
        np.empty(0, dtype=np.int64),
        np.empty(0, dtype=np.int64),
        np.empty(0, dtype=np.float64),
    )
    if n_points < 2:
        return empty

    cells, shape = cell_indices(points, box_halfwidth, r)
    linear = np.ravel_multi_index(cells.T, shape)
    order = np.argsort(linear, kind="stable")
    sorted_linear = linear[order]

    src_list = []
    dst_list = []
    for offset in itertools.product((-1, 0, 1), repeat=dim):
        neighbour_cells = cells + np.array(offset, dtype=np.int64)
        inside = np.all((neighbour_cells >= 0) & (neighbour_cells < shape[0]), axis=1)
        if not inside.any():
            continue
        idx_src = np.flatnonzero(inside)
        target = np.ravel_multi_index(neighbour_cells[idx_src].T, shape)
        starts = np.searchsorted(sorted_linear, target, side="left")
        stops = np.searchsorted(sorted_linear, target, side="right")
        counts = stops - starts
        cand_src = np.repeat(idx_src, counts)
        cand_dst = order[ragged_ranges(starts, counts)]
        keep = cand_src != cand_dst
        src_list.append(cand_src[keep])
        dst_list.append(cand_dst[keep])

    src = np.concatenate(src_list)
    dst = np.concatenate(dst_list)
    dist = pair_distances(points, src, dst)
    within = dist < r
    src, dst, dist = src[within], dst[within], dist[within]

    sort_idx = np.lexsort((dst, src))
    return src[sort_idx], dst[sort_idx], dist[sort_idx]


def csr_from_pairs(src, dst, n_points):
    """
    Compressed row pointer for pairs sorted by `src`.

    Returns
    -------
    numpy.ndarray
        indptr of length n_points + 1
    """
    counts = np.bincount(src, minlength=n_points).astype(np.int64)
    indptr = np.zeros(n_points + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    return indptr


def pad_rows(indptr, indices, values):
    """
    Convert a CSR structure into a fixed width table. Missing slots point to
    the row itself and are masked out.

    Returns
    -------
    table_idx : numpy.ndarray
        integer array (N, D) with the neighbour indices
    table_val : numpy.ndarray
        array (N, D) with the stored values (0 where masked)
    mask : numpy.ndarray
        boolean array (N, D)
    """
    n_rows = len(indptr) - 1
    counts = np.diff(indptr)
    width = int(counts.max()) if n_rows and counts.size else 0
    table_idx = np.repeat(np.arange(n_rows, dtype=np.int64)[:, None], width, axis=1)
    table_val = np.zeros((n_rows, width), dtype=np.float64)
    mask = np.arange(width)[None, :] < counts[:, None]
    rows = np.repeat(np.arange(n_rows), counts)
    cols = np.arange(len(indices)) - np.repeat(indptr[:-1], counts)
    table_idx[rows, cols] = indices
    table_val[rows, cols] = values
    return table_idx, table_val, mask


def log_factorial(n):
    """
    Natural logarithm of n! for (arrays of) non-negative numbers.
    """
    return gammaln(np.asarray(n, dtype=np.float64) + 1.0)


def loglog_fit(x, y):
    """
    Least squares line through (log x, log y).

    Returns
    -------
    slope : float
    intercept : float
    """
    log_x = np.log(np.asarray(x, dtype=np.float64))
    log_y = np.log(np.asarray(y, dtype=np.float64))
    if log_x.size < 2 or np.ptp(log_x) == 0:
        return float("nan"), float("nan")
    slope, intercept = np.polyfit(log_x, log_y, 1)
    return float(slope), float(intercept)


def replica_chunks(n_replicas, workers):
    """
    Split `range(n_replicas)` into at most `workers` contiguous chunks.

    Returns
    -------
    list of tuple
        (start, stop) pairs in ascending order
    """
    workers = max(1, min(int(workers), n_replicas)) if n_replicas else 1
    bounds = np.linspace(0, n_replicas, workers + 1).round().astype(np.int64)
    return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def map_replicas(func, n_replicas, workers=1):
    """
    Evaluate `func(start, stop)` on contiguous replica chunks and concatenate
    the returned arrays along axis 0 in replica order. The chunking only
    decides who computes what, never the values.

    Parameters
    ----------
    func : callable
        function of (start, stop) returning an array with stop - start rows
    n_replicas : int
        total number of replicas
    workers : int, optional
        number of joblib workers, by default 1

    Returns
    -------
    numpy.ndarray
        stacked result
    """
    chunks = replica_chunks(n_replicas, workers)
    if len(chunks) <= 1:
        return func(0, n_replicas)
    parts = Parallel(n_jobs=len(chunks), prefer="threads")(
        delayed(func)(start, stop) for start, stop in chunks
    )
    return np.concatenate(parts, axis=0)
