"""Point predictors for scalar-on-function regression.

* local linear (LL): kernel-weighted affine fit in the first ``J`` basis
  coordinates around the target curve; the intercept estimates the
  regression operator, the slope vector the functional derivative.
* local constant (LC): Nadaraya-Watson weighted mean, identical to LL with
  ``J = 0``.
* functional linear (L): least squares on centered basis scores.
* Mueller-Yao additive (MY): one univariate local-linear smoother per
  principal score.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateError,
    InsufficientDataError,
    InsufficientLocalDataError,
    SingularDesignError,
)
from .fpca import FpcaModel, dimension_for_variance, fit_fpca, scores
from .funcspace import (
    BasisSet,
    Curve,
    FunctionalSample,
    check_same_grid,
    project_coeffs,
    project_sample,
    reconstruct,
)
from .kernels import (
    DEFAULT_KERNEL,
    SortedNeighbors,
    cross_distances,
    distances_to,
    kernel_eval,
    pairwise_distances,
)
from .locfit import RANK_TOL, knn_fits


def _as_sample(x):
    if isinstance(x, Curve):
        return FunctionalSample(x.grid, x.values[None, :]), True
    return x, False


def _check_J(J, basis):
    if J < 0 or J > (0 if basis is None else basis.J):
        raise ValueError(f"J={J} is outside [0, {0 if basis is None else basis.J}]")


@dataclass(frozen=True, eq=False)
class LocalFit:
    a_hat: float
    b_hat: np.ndarray
    derivative: Curve | None
    effective_weights: np.ndarray
    rank: int
    degenerate: bool = False
    trace_contribution: float | None = None


def local_linear_fit(sample: FunctionalSample, y, x: Curve, basis: BasisSet | None, J: int,
                     h: float, kernel=DEFAULT_KERNEL, self_index=None,
                     allow_singular=False) -> LocalFit:
    """Minimize the kernel-weighted squared error of a local affine model at ``x``.

    The weighted design ``sqrt(K) [1, <phi_j, X_i - x>]`` is solved by an
    SVD-based least-squares routine; nothing is inverted explicitly.

    Parameters
    ----------
    sample, y : training curves and responses
    x : Curve
        Target curve.
    basis : BasisSet or None
        Only its first ``J`` functions are used; may be None when ``J == 0``.
    J : int
        Number of slope coordinates; ``J = 0`` gives the Nadaraya-Watson fit.
    h : float
        Bandwidth (distance units).
    self_index : int, optional
        When ``x`` is the training curve with this index, the diagonal
        entry of the smoother matrix is returned as ``trace_contribution``.
    allow_singular : bool
        Return the minimum-norm solution with ``degenerate=True`` instead of
        raising :class:`SingularDesignError`.
    """
    y = np.asarray(y, dtype=float)
    if h <= 0:
        raise ValueError("bandwidth must be positive")
    _check_J(J, basis)
    if y.shape != (sample.n,):
        raise ValueError("y must hold one response per curve")
    dist = distances_to(sample, x)
    w = kernel_eval(kernel, dist / h)
    if np.count_nonzero(w) < J + 1:
        raise InsufficientLocalDataError(
            f"{np.count_nonzero(w)} curves with positive weight, need {J + 1}"
        )
    design = np.ones((sample.n, J + 1))
    if J:
        b = basis.truncate(J)
        design[:, 1:] = project_sample(sample, b) - project_coeffs(x, b)
    sw = np.sqrt(w)
    A = design * sw[:, None]
    # equilibrate columns so the rank test does not depend on coordinate scale
    scale = np.linalg.norm(A, axis=0)
    scale[scale == 0] = 1.0
    # coordinates never exceed curve distances: tinier columns are rounding noise
    noise = scale[1:] <= RANK_TOL * np.sqrt(np.sum(w * dist ** 2))
    scale[1:][noise] = 1.0
    A_eq = A / scale
    A_eq[:, 1:][:, noise] = 0.0
    sv = np.linalg.svd(A_eq, compute_uv=False)
    rank = int(np.sum(sv > RANK_TOL * sv[0])) if sv.size and sv[0] > 0 else 0
    degenerate = rank < J + 1
    if degenerate and not allow_singular:
        raise SingularDesignError(f"weighted design has rank {rank} < {J + 1}", rank=rank)
    if degenerate:
        op = np.linalg.pinv(A, rcond=RANK_TOL) * sw[None, :]
    else:
        op = (np.linalg.pinv(A / scale) / scale[:, None]) * sw[None, :]
    theta = op @ y
    deriv = reconstruct(theta[1:], basis.truncate(J)) if J else None
    trace = float(op[0, self_index]) if self_index is not None else None
    return LocalFit(float(theta[0]), theta[1:].copy(), deriv, w, rank, degenerate, trace)


def local_constant_fit(sample: FunctionalSample, y, x: Curve, h: float,
                       kernel=DEFAULT_KERNEL) -> float:
    w = kernel_eval(kernel, distances_to(sample, x) / h)
    total = w.sum()
    if total <= 0:
        raise InsufficientLocalDataError("every kernel weight is zero")
    return float(np.dot(w, np.asarray(y, dtype=float)) / total)


# --- batched local linear ----------------------------------------------------


class FunctionalLocalLinear:
    """Local-linear predictions from one training sample at many target curves.

    Bandwidths are expressed as neighbor counts ``k``: the radius at a target
    is the distance to its k-th nearest training curve.
    """

    def __init__(self, sample: FunctionalSample, y, basis: BasisSet | None,
                 kernel=DEFAULT_KERNEL):
        self.sample = sample
        self.y = np.asarray(y, dtype=float)
        self.basis = basis
        self.kernel = kernel
        self.J_max = 0 if basis is None else basis.J
        self.coords = (np.zeros((sample.n, 0)) if basis is None
                       else project_sample(sample, basis))
        self._dist = None

    @property
    def train_distances(self):
        if self._dist is None:
            self._dist = pairwise_distances(self.sample)
        return self._dist

    def query_coords(self, X: FunctionalSample):
        if self.basis is None:
            return np.zeros((X.n, 0))
        return project_sample(X, self.basis)

    def sample_neighbors(self, loo: bool) -> SortedNeighbors:
        exclude = np.arange(self.sample.n) if loo else None
        return SortedNeighbors(self.train_distances, exclude)

    def sample_fits(self, k, J_max=None, loo=False, neighbors=None):
        """Factorized fits at every training curve (leave-one-out if ``loo``)."""
        J_max = self.J_max if J_max is None else J_max
        nb = neighbors if neighbors is not None else self.sample_neighbors(loo)
        return knn_fits(self.coords, self.coords, None, k, J_max, self.kernel, neighbors=nb)

    def fits_at(self, X: FunctionalSample, k, J_max=None):
        J_max = self.J_max if J_max is None else J_max
        dist = cross_distances(X, self.sample)
        return knn_fits(self.coords, self.query_coords(X), dist, k, J_max, self.kernel)

    def predict(self, X, J, k_reg, k_deriv=None):
        """Values and derivative coordinates at the curves of ``X``.

        Returns ``(values, deriv_coeffs)``; ``deriv_coeffs`` has shape
        ``(q, J)`` and is computed with ``k_deriv`` (defaults to ``k_reg``).
        Rank-deficient targets yield NaN.
        """
        X, _ = _as_sample(X)
        _check_J(J, self.basis)
        theta = self.fits_at(X, k_reg, J).solve(J, self.y)
        values = theta[:, 0]
        if k_deriv is None or k_deriv == k_reg:
            return values, theta[:, 1:]
        theta_d = self.fits_at(X, k_deriv, J).solve(J, self.y)
        return values, theta_d[:, 1:]

    def derivative_curves(self, coeffs) -> np.ndarray:
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape[1] == 0:
            return np.zeros((coeffs.shape[0], len(self.sample.grid)))
        return coeffs @ self.basis.functions[: coeffs.shape[1]]


def ll_hat_diagonal(sample: FunctionalSample, y, basis: BasisSet | None, J: int, k: int,
                    kernel=DEFAULT_KERNEL) -> np.ndarray:
    """Diagonal of the smoother matrix of in-sample LL fits (self included).

    Entry ``i`` is the weight of ``Y_i`` in the fitted value at ``X_i``.
    ``y`` is accepted for interface symmetry; the smoother does not depend on it.
    Rank-deficient points give NaN.
    """
    model = FunctionalLocalLinear(sample, np.zeros(sample.n) if y is None else y,
                                  basis, kernel)
    fits = model.sample_fits(k, J_max=J, loo=False)
    return _self_weights(fits, J)


def _self_weights(fits, J):
    iw = fits.intercept_weights(J)
    n = fits.n_query
    pos = fits.idx == np.arange(n)[:, None]
    if not np.all(pos.any(axis=1)):
        raise InsufficientLocalDataError("a curve is missing from its own neighborhood")
    return np.where(pos, iw, 0.0).sum(axis=1)


# --- functional linear -------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LinearModelFit:
    intercept: float
    coeffs: np.ndarray
    basis: BasisSet | None
    mean_curve: Curve
    y_mean: float

    @property
    def J(self):
        return self.coeffs.size

    def derivative(self) -> Curve:
        if self.J == 0:
            return Curve(self.mean_curve.grid, np.zeros(len(self.mean_curve.grid)))
        return reconstruct(self.coeffs, self.basis.truncate(self.J))


def _centered_scores(sample, basis, J, mean):
    if J == 0:
        return np.zeros((sample.n, 0))
    return project_sample(sample, basis.truncate(J), center=mean)


def functional_linear_fit(sample: FunctionalSample, y, basis: BasisSet | None,
                          J: int) -> LinearModelFit:
    """Least squares of centered responses on centered scores, with intercept."""
    y = np.asarray(y, dtype=float)
    _check_J(J, basis)
    if sample.n < J + 2:
        raise InsufficientDataError(f"need at least {J + 2} curves for J={J}")
    mean = sample.mean_curve()
    S = _centered_scores(sample, basis, J, mean)
    ym = float(y.mean())
    A = np.column_stack([np.ones(sample.n), S])
    theta, _, rank, sv = np.linalg.lstsq(A, y - ym, rcond=None)
    if rank < J + 1:
        raise SingularDesignError(f"score matrix has rank {rank} < {J + 1}", rank=rank)
    return LinearModelFit(float(theta[0]), theta[1:].copy(), basis, mean, ym)


def functional_linear_predict(fit: LinearModelFit, x):
    """Prediction at ``x`` (a raw, uncentered curve or sample) and the coefficient curve.

    Centering by the training mean curve is done here. For a sample input the
    values come back as an array and the derivative is the same curve for every row.
    """
    X, single = _as_sample(x)
    check_same_grid(X.grid, fit.mean_curve.grid)
    S = _centered_scores(X, fit.basis, fit.J, fit.mean_curve)
    values = fit.y_mean + fit.intercept + S @ fit.coeffs
    deriv = fit.derivative()
    return (float(values[0]), deriv) if single else (values, deriv)


def functional_linear_loo(sample: FunctionalSample, y, basis: BasisSet | None, J: int) -> float:
    """Leave-one-out squared prediction error of the linear model (hat-matrix shortcut)."""
    y = np.asarray(y, dtype=float)
    S = _centered_scores(sample, basis, J, sample.mean_curve())
    A = np.column_stack([np.ones(sample.n), S])
    Q, R = np.linalg.qr(A)
    d = np.abs(np.diag(R))
    if np.any(d <= RANK_TOL * np.maximum(np.linalg.norm(A, axis=0), 1e-300)):
        return np.inf
    resid = y - Q @ (Q.T @ y)
    lev = np.sum(Q * Q, axis=1)
    if np.any(lev >= 1 - 1e-12):
        return np.inf
    return float(np.mean((resid / (1 - lev)) ** 2))


# --- univariate local linear (MY components, single-index link) --------------


def default_k_grid(n, lo=5, size=20, hi_frac=0.9):
    """About ``size`` geometrically spaced neighbor counts in ``[lo, floor(hi_frac*n)]``."""
    hi = max(int(np.floor(hi_frac * n)), 2)
    lo = min(max(int(lo), 2), hi)
    grid = np.unique(np.round(np.geomspace(lo, hi, size)).astype(int))
    return [int(k) for k in grid if 2 <= k <= n - 1] or [min(hi, n - 1)]


class LocalLinear1D:
    """Univariate local-linear smoother with a kNN bandwidth.

    When ``k`` is None it is chosen by leave-one-out cross-validation over
    ``k_grid``. Predictions return both the fitted value and the local slope.
    """

    def __init__(self, z, y, k=None, k_grid=None, kernel=DEFAULT_KERNEL):
        self.z = np.asarray(z, dtype=float).ravel()
        self.y = np.asarray(y, dtype=float).ravel()
        self.kernel = kernel
        n = self.z.size
        if n < 4:
            raise InsufficientDataError("univariate smoother needs at least 4 points")
        if np.ptp(self.z) == 0:
            raise DegenerateError("constant design axis")
        self.lo, self.hi = float(self.z.min()), float(self.z.max())
        self._coords = self.z[:, None]
        if k is None:
            grid = k_grid if k_grid is not None else default_k_grid(n, lo=3)
            self.cv_trace = {int(kk): self.loo_score(kk) for kk in grid}
            finite = {kk: v for kk, v in self.cv_trace.items() if np.isfinite(v)}
            if not finite:
                raise DegenerateError("no admissible bandwidth for the univariate smoother")
            best = min(finite.values())
            k = min(kk for kk, v in finite.items() if v == best)
        else:
            self.cv_trace = {}
        self.k = int(k)

    def loo_score(self, k):
        d = np.abs(self.z[:, None] - self.z[None, :])
        nb = SortedNeighbors(d, exclude=np.arange(self.z.size))
        fits = knn_fits(self._coords, self._coords, None, k, 1, self.kernel, neighbors=nb)
        a = fits.solve(1, self.y)[:, 0]
        if not np.all(np.isfinite(a)):
            return np.inf
        return float(np.mean((self.y - a) ** 2))

    def predict(self, z_new, clamp=True):
        """Return ``(values, slopes, clamped)`` at ``z_new``."""
        z_new = np.atleast_1d(np.asarray(z_new, dtype=float))
        zc = np.clip(z_new, self.lo, self.hi) if clamp else z_new
        clamped = zc != z_new
        d = np.abs(zc[:, None] - self.z[None, :])
        fits = knn_fits(self._coords, zc[:, None], d, self.k, 1, self.kernel)
        theta = fits.solve(1, self.y)
        bad = ~np.isfinite(theta[:, 0])
        if bad.any():
            # local line undetermined (e.g. all neighbors tied): fall back to local mean
            theta0 = fits.solve(0, self.y)[:, 0]
            theta[bad, 0] = theta0[bad]
            theta[bad, 1] = 0.0
        return theta[:, 0], theta[:, 1], clamped


# --- Mueller-Yao additive model ---------------------------------------------


@dataclass(frozen=True, eq=False)
class AdditiveFit:
    fpca: FpcaModel
    J: int
    components: list
    y_mean: float
    warnings: list = field(default_factory=list)


def my_additive_fit(sample: FunctionalSample, y, variance_fraction=0.9, fpca=None,
                    kernel=DEFAULT_KERNEL, J_max=20) -> AdditiveFit:
    """Additive model on principal scores, ``J`` set by the explained-variance rule."""
    y = np.asarray(y, dtype=float)
    if sample.n < 10:
        raise InsufficientDataError("the additive model needs at least 10 curves")
    model = fpca if fpca is not None else fit_fpca(sample, J_max)
    J = dimension_for_variance(model, variance_fraction)
    S = scores(model, sample, J)
    ym = float(y.mean())
    comps, notes = [], []
    for j in range(J):
        try:
            comps.append(LocalLinear1D(S[:, j], y - ym, kernel=kernel))
        except DegenerateError as exc:
            comps.append(None)
            notes.append(f"component {j + 1} skipped: {exc}")
            warnings.warn(notes[-1], RuntimeWarning, stacklevel=2)
    return AdditiveFit(model, J, comps, ym, notes)


def my_predict(fit: AdditiveFit, x, return_clamped=False):
    """Value ``ybar + sum_j f_j(s_j(x))`` and derivative ``sum_j f_j'(s_j(x)) phi_j``.

    Scores outside the training range are clamped to it before evaluation.
    """
    X, single = _as_sample(x)
    S = scores(fit.fpca, X, fit.J)
    values = np.full(X.n, fit.y_mean)
    slopes = np.zeros((X.n, fit.J))
    clamped = np.zeros(X.n, dtype=bool)
    for j, comp in enumerate(fit.components):
        if comp is None:
            continue
        v, s, c = comp.predict(S[:, j])
        values += v
        slopes[:, j] = s
        clamped |= c
    phi = fit.fpca.eigenfunctions.functions[: fit.J]
    deriv = slopes @ phi if fit.J else np.zeros((X.n, len(X.grid)))
    if single:
        out = (float(values[0]), Curve(X.grid, deriv[0]))
        return out + (bool(clamped[0]),) if return_clamped else out
    out = (values, FunctionalSample(X.grid, deriv))
    return out + (clamped,) if return_clamped else out
