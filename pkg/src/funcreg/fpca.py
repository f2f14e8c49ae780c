"""Functional principal components under the quadrature metric.

The empirical covariance operator uses the ``1/n`` normalization, so the
eigenvalues sum to the integrated pointwise variance ``sum_m w_m var(X(t_m))``
computed with ``ddof=0``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateError, InsufficientDataError
from .funcspace import BasisSet, Curve, FunctionalSample, Grid, check_same_grid

#: Eigenvalues below this fraction of the leading one are treated as zero.
RELATIVE_EIGEN_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class FpcaModel:
    mean_curve: Curve
    eigenfunctions: BasisSet
    eigenvalues: np.ndarray

    @property
    def grid(self) -> Grid:
        return self.mean_curve.grid

    @property
    def n_components(self):
        return self.eigenfunctions.J

    def basis(self, J=None) -> BasisSet:
        return self.eigenfunctions if J is None else self.eigenfunctions.truncate(J)

    def to_dict(self):
        return {
            "grid": self.grid.to_dict(),
            "mean": self.mean_curve.values.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "eigenfunctions": self.eigenfunctions.functions.tolist(),
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d):
        grid = Grid.from_dict(d["grid"])
        funcs = np.asarray(d["eigenfunctions"], dtype=float).reshape(-1, len(grid))
        return cls(
            Curve(grid, d["mean"]),
            BasisSet(grid, funcs, "fpca"),
            np.asarray(d["eigenvalues"], dtype=float),
        )


def _sign_normalize(phi, w):
    integral = phi @ w
    # fallback: the first grid value that is not rounding noise (sin(0) is ~1e-16)
    big = np.abs(phi) > 1e-8 * np.max(np.abs(phi), axis=1, keepdims=True)
    lead = phi[np.arange(phi.shape[0]), np.argmax(big, axis=1)]
    flip = np.where(np.abs(integral) >= 1e-10, integral < 0, lead < 0)
    phi[flip] *= -1
    return phi


def fit_fpca(sample: FunctionalSample, J_max: int) -> FpcaModel:
    """Mean curve and leading eigenpairs of the empirical covariance operator.

    The symmetric eigenproblem is solved in whichever of the ``n x n`` dual
    form or the ``M x M`` form ``W^1/2 C W^1/2`` is smaller. Each
    eigenfunction is signed so that its integral is positive (or, when the
    integral vanishes, so that its first non-negligible grid value is positive).
    """
    n, M = sample.data.shape
    if n < 2:
        raise InsufficientDataError("FPCA needs at least two curves")
    if J_max < 1:
        raise ValueError("J_max must be >= 1")
    w = sample.grid.weights
    mean = sample.data.mean(axis=0)
    xc = sample.data - mean
    keep = min(int(J_max), n - 1, M)

    if n < M:
        gram = (xc * w) @ xc.T / n
        vals, vecs = np.linalg.eigh(0.5 * (gram + gram.T))
        vals, vecs = vals[::-1], vecs[:, ::-1]
        pos = vals > 0
        phi = np.zeros((vals.size, M))
        phi[pos] = (xc.T @ vecs[:, pos] / np.sqrt(n * vals[pos])).T
    else:
        sw = np.sqrt(w)
        if np.any(sw == 0):
            raise ValueError("the M x M form needs strictly positive quadrature weights")
        cov = (xc * sw).T @ (xc * sw) / n
        vals, vecs = np.linalg.eigh(0.5 * (cov + cov.T))
        vals, vecs = vals[::-1], vecs[:, ::-1]
        phi = (vecs / sw[:, None]).T

    vals = np.where(vals < 0, 0.0, vals)
    lead = vals[0] if vals.size else 0.0
    n_pos = int(np.sum(vals > RELATIVE_EIGEN_FLOOR * lead)) if lead > 0 else 0
    keep = min(keep, n_pos)
    # sign after any re-orthonormalization done by BasisSet
    phi = np.array(BasisSet(sample.grid, phi[:keep], "fpca").functions)
    phi = _sign_normalize(phi, w)
    eigvals = np.array(vals[:keep])
    eigvals.setflags(write=False)
    return FpcaModel(Curve(sample.grid, mean), BasisSet(sample.grid, phi, "fpca"), eigvals)


def scores(model: FpcaModel, sample: FunctionalSample, J: int | None = None) -> np.ndarray:
    """Principal scores ``<X_i - mean, phi_j>`` as an ``n x J`` matrix."""
    check_same_grid(model.grid, sample.grid)
    J = model.n_components if J is None else J
    if not 0 <= J <= model.n_components:
        raise ValueError(f"J={J} exceeds the {model.n_components} available eigenpairs")
    phi = model.eigenfunctions.functions[:J]
    return ((sample.data - model.mean_curve.values) * model.grid.weights) @ phi.T


def dimension_for_variance(model_or_eigenvalues, fraction: float = 0.9) -> int:
    """Smallest ``J`` whose leading eigenvalues explain ``fraction`` of the total."""
    ev = getattr(model_or_eigenvalues, "eigenvalues", model_or_eigenvalues)
    ev = np.clip(np.asarray(ev, dtype=float), 0.0, None)
    if not 0 < fraction <= 1:
        raise ValueError("fraction must lie in (0, 1]")
    total = ev.sum()
    if total <= 0:
        raise DegenerateError("all eigenvalues are zero")
    share = np.cumsum(ev) / total
    # rounding must not push an exact hit like 9/10 below the threshold
    return int(np.argmax(share >= fraction - 1e-12) + 1)
