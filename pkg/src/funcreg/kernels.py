"""Kernels on [0, 1], L2 distances between curves and k-nearest-neighbor bandwidths."""

from __future__ import annotations

from enum import Enum

import numpy as np

from .funcspace import Curve, FunctionalSample, check_same_grid


class Kernel(str, Enum):
    """Asymmetric kernels supported on [0, 1]; zero elsewhere."""

    EPANECHNIKOV = "epanechnikov_asym"
    UNIFORM = "uniform"
    TRIANGLE = "triangle_asym"

    def __call__(self, t):
        return kernel_eval(self, t)


DEFAULT_KERNEL = Kernel.EPANECHNIKOV


def kernel_eval(kernel, t):
    """Evaluate ``kernel`` at ``t`` (scalar or array)."""
    kernel = Kernel(kernel)
    t = np.asarray(t, dtype=float)
    inside = (t >= 0) & (t <= 1)
    if kernel is Kernel.EPANECHNIKOV:
        v = 0.5 * (1.0 - t * t)
    elif kernel is Kernel.UNIFORM:
        v = np.ones_like(t)
    else:
        v = 1.0 - t
    out = np.where(inside, v, 0.0)
    return float(out) if out.ndim == 0 else out


def pairwise_distances(sample: FunctionalSample) -> np.ndarray:
    """Symmetric ``n x n`` matrix of quadrature L2 distances."""
    return cross_distances(sample, sample, symmetric=True)


def cross_distances(a: FunctionalSample, b: FunctionalSample, symmetric=False) -> np.ndarray:
    """Distances ``||a_i - b_j||`` for every pair of rows."""
    check_same_grid(a.grid, b.grid)
    w = a.grid.weights
    # Direct differencing keeps zero distances exactly zero; Gram expansions do not.
    d = np.empty((a.n, b.n))
    block = max(1, 2_000_000 // max(1, b.n * len(a.grid)))
    for s in range(0, a.n, block):
        diff = a.data[s : s + block, None, :] - b.data[None, :, :]
        d[s : s + block] = np.sqrt(np.einsum("ijm,m,ijm->ij", diff, w, diff))
    if symmetric:
        d = 0.5 * (d + d.T)
        np.fill_diagonal(d, 0.0)
    return d


def distances_to(sample: FunctionalSample, x: Curve) -> np.ndarray:
    check_same_grid(sample.grid, x.grid)
    diff = sample.data - x.values
    return np.sqrt(np.maximum(diff * diff @ sample.grid.weights, 0.0))


def knn_bandwidth(distances, k: int) -> float:
    """Smallest radius whose closed ball holds at least ``k`` of the given distances.

    This is the k-th order statistic. Ties at that radius put more than ``k``
    points in the ball; they are kept as they are. Callers estimating at a
    sample curve must drop its zero self-distance first.
    """
    d = np.asarray(distances, dtype=float).ravel()
    if int(k) != k or not 1 <= k <= d.size:
        raise ValueError(f"k must lie in [1, {d.size}], got {k!r}")
    if np.any(d < 0):
        raise ValueError("distances must be nonnegative")
    return float(np.partition(d, int(k) - 1)[int(k) - 1])


def scaled_weights(kernel, distances, h):
    """Kernel weights ``K(d / h)``; a zero radius keeps only exact matches."""
    d = np.asarray(distances, dtype=float)
    h = np.asarray(h, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.where(h > 0, d / np.where(h > 0, h, 1.0), np.where(d == 0, 0.0, np.inf))
    return kernel_eval(kernel, u)


class SortedNeighbors:
    """Distance rows sorted once, reused for every candidate neighbor count.

    Parameters
    ----------
    dist : ndarray, shape (q, n)
        Distances from ``q`` query curves to ``n`` reference curves.
    exclude : ndarray of int, shape (q,), optional
        Reference index removed from each row (leave-one-out).
    """

    def __init__(self, dist, exclude=None):
        dist = np.asarray(dist, dtype=float)
        order = np.argsort(dist, axis=1, kind="stable")
        if exclude is not None:
            exclude = np.asarray(exclude)
            keep = order != exclude[:, None]
            order = order[keep].reshape(dist.shape[0], dist.shape[1] - 1)
        self.order = order
        self.sorted = np.take_along_axis(dist, order, axis=1)

    @property
    def n_ref(self):
        return self.order.shape[1]

    def bandwidths(self, k):
        if not 1 <= k <= self.n_ref:
            raise ValueError(f"k must lie in [1, {self.n_ref}], got {k}")
        return self.sorted[:, k - 1]

    def neighborhoods(self, k, kernel=DEFAULT_KERNEL):
        """Indices and kernel weights of the closed kNN balls.

        Returns ``(idx, weights, h)`` with ``idx`` and ``weights`` of shape
        ``(q, m)``; ``m`` is the largest ball population over rows (``k``
        unless ties), and entries outside a row's ball carry weight zero.
        """
        h = self.bandwidths(k)
        counts = np.sum(self.sorted <= h[:, None], axis=1)
        m = int(counts.max())
        idx = self.order[:, :m]
        w = scaled_weights(kernel, self.sorted[:, :m], h[:, None])
        w = np.where(np.arange(m)[None, :] < counts[:, None], w, 0.0)
        return idx, w, h
