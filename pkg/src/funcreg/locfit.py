"""Batched kernel-weighted least squares over kNN neighborhoods.

Every estimator in the package reduces to many small problems of the form

    min_theta  sum_l w_l (y_l - theta_0 - sum_j theta_j (c_lj - c_xj))^2

over the neighbors ``l`` of a query point ``x``, where ``c`` are basis
coordinates. Adding columns to the design leaves the leading block of a
Householder QR factorization unchanged, so one factorization per neighbor
count yields the fits for every dimension ``J <= J_max`` at once.
"""

from __future__ import annotations

import numpy as np

from .kernels import DEFAULT_KERNEL, SortedNeighbors

#: A design column whose residual after projection on the previous columns
#: falls below this fraction of its own norm is numerically dependent.
RANK_TOL = 1e-10


class NestedLocalFits:
    """Local designs for ``q`` query points, factorized once for all ``J <= J_max``.

    Parameters
    ----------
    coords : ndarray, shape (n, >= J_max)
        Basis coordinates of the reference curves.
    query_coords : ndarray, shape (q, >= J_max)
        Basis coordinates of the query curves.
    idx, weights : ndarray, shape (q, m)
        Neighbor indices and kernel weights of each query's ball.
    J_max : int
    dist : ndarray, shape (q, m), optional
        Curve distances of the neighbors; they set the scale below which a
        coordinate column counts as zero. Defaults to coordinate distances.
    """

    def __init__(self, coords, query_coords, idx, weights, J_max, dist=None):
        self.idx = idx
        self.J_max = int(J_max)
        self.sqrt_w = np.sqrt(weights)
        q, m = idx.shape
        A = np.empty((q, m, self.J_max + 1))
        A[:, :, 0] = 1.0
        if self.J_max:
            A[:, :, 1:] = (
                coords[idx, : self.J_max] - query_coords[:, None, : self.J_max]
            )
        if dist is None:
            dist = np.linalg.norm(A[:, :, 1:], axis=2)
        A *= self.sqrt_w[:, :, None]
        self.Q, self.R = np.linalg.qr(A)
        r = self.R.shape[1]
        col_norm = np.linalg.norm(A, axis=1)[:, :r]
        diag = np.abs(np.diagonal(self.R, axis1=1, axis2=2))
        self._indep = diag > RANK_TOL * col_norm
        self._indep &= col_norm > 0
        # a coordinate never exceeds the curve distance, so a slope column far
        # below the weighted distance scale is rounding noise, not a direction
        scale = np.sqrt(np.sum(weights * np.asarray(dist) ** 2, axis=1))
        self._indep[:, 1:] &= col_norm[:, 1:] > RANK_TOL * scale[:, None]
        # cumulative: J is full rank iff columns 0..J are all independent
        self._full = np.cumprod(self._indep, axis=1).astype(bool)

    @property
    def n_query(self):
        return self.idx.shape[0]

    def full_rank(self, J):
        if J + 1 > self._full.shape[1]:
            return np.zeros(self.n_query, dtype=bool)
        return self._full[:, J]

    def rank(self, J):
        if J + 1 > self._indep.shape[1]:
            return np.sum(self._indep, axis=1)
        return np.sum(self._indep[:, : J + 1], axis=1)

    def solve(self, J, y):
        """Coefficients ``(a, b_1..b_J)`` for responses ``y`` (shape (n,) or (n, B)).

        Returns an array of shape ``(q, J+1)`` or ``(q, J+1, B)``; rows that are
        not of full rank are NaN.
        """
        ok = self.full_rank(J)
        y = np.asarray(y, dtype=float)
        extra = y.shape[1:]
        out = np.full((self.n_query, J + 1) + extra, np.nan)
        if not ok.any():
            return out
        yl = y[self.idx[ok]] * self.sqrt_w[ok].reshape(self.sqrt_w[ok].shape + (1,) * len(extra))
        qty = np.einsum("qmr,qm...->qr...", self.Q[ok, :, : J + 1], yl)
        R = self.R[ok, : J + 1, : J + 1]
        if extra:
            out[ok] = np.linalg.solve(R, qty)
        else:
            out[ok] = np.linalg.solve(R, qty[..., None])[..., 0]
        return out

    def intercept_weights(self, J):
        """Linear weights of the intercept on each neighbor's response, shape (q, m).

        The intercept equals ``sum_l weights[:, l] * y[idx[:, l]]``; rows not of
        full rank are NaN.
        """
        ok = self.full_rank(J)
        out = np.full(self.idx.shape, np.nan)
        if ok.any():
            R = self.R[ok, : J + 1, : J + 1]
            e0 = np.zeros((int(ok.sum()), J + 1, 1))
            e0[:, 0, 0] = 1.0
            z = np.linalg.solve(np.swapaxes(R, 1, 2), e0)[..., 0]
            out[ok] = np.einsum("qmr,qr->qm", self.Q[ok, :, : J + 1], z) * self.sqrt_w[ok]
        return out


def knn_fits(coords, query_coords, dist, k, J_max, kernel=DEFAULT_KERNEL, exclude=None,
             neighbors=None):
    """Factorized local fits with a kNN radius at every query point.

    ``dist`` holds query-to-reference distances; ``exclude`` drops one
    reference per query row (leave-one-out). A prebuilt
    :class:`SortedNeighbors` may be passed to skip re-sorting.
    """
    nb = neighbors if neighbors is not None else SortedNeighbors(dist, exclude)
    idx, w, h = nb.neighborhoods(k, kernel)
    fits = NestedLocalFits(coords, query_coords, idx, w, J_max, dist=nb.sorted[:, : idx.shape[1]])
    fits.h = h
    return fits
