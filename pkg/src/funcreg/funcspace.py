"""Discretized L2[0, 1]: grids, curves, quadrature and orthonormal bases.

All curves taking part in one analysis live on a single shared :class:`Grid`.
Integrals are composite-trapezoid sums over the stored points, so every inner
product is an exact weighted dot product ``sum(w * f * g)``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import IncompatibleGridsError

#: Maximal per-entry Gram defect accepted for a basis.
ORTHO_TOL = 1e-8
#: Gram defect above which a basis is re-orthonormalized.
REORTHO_TOL = 1e-10


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


def trapezoid_weights(points) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    w = np.zeros_like(points)
    dt = np.diff(points)
    w[:-1] += dt / 2
    w[1:] += dt / 2
    return w


@dataclass(frozen=True, eq=False)
class Grid:
    """Ordered abscissae in [0, 1] with their quadrature weights."""

    points: np.ndarray
    weights: np.ndarray = None

    def __post_init__(self):
        pts = _frozen(self.points)
        if pts.ndim != 1 or pts.size < 2:
            raise ValueError("a grid needs at least two points")
        if not np.all(np.isfinite(pts)) or np.any(np.diff(pts) <= 0):
            raise ValueError("grid points must be finite and strictly increasing")
        if pts[0] < 0 or pts[-1] > 1:
            raise ValueError("grid points must lie in [0, 1]")
        w = trapezoid_weights(pts) if self.weights is None else self.weights
        w = _frozen(w)
        if w.shape != pts.shape or np.any(w < 0):
            raise ValueError("weights must be nonnegative, one per point")
        if abs(w.sum() - (pts[-1] - pts[0])) > 1e-12:
            raise ValueError("weights must sum to the length of the grid span")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    def __len__(self):
        return self.points.size

    def __eq__(self, other):
        if self is other:
            return True
        if not isinstance(other, Grid):
            return NotImplemented
        return np.array_equal(self.points, other.points) and np.array_equal(
            self.weights, other.weights
        )

    __hash__ = object.__hash__

    def to_dict(self):
        return {"points": self.points.tolist(), "weights": self.weights.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["points"]), np.asarray(d["weights"]))


def make_uniform_grid(M: int) -> Grid:
    """``M`` equispaced points on [0, 1] with composite-trapezoid weights."""
    if int(M) != M or M < 2:
        raise ValueError(f"M must be an integer >= 2, got {M!r}")
    return Grid(np.linspace(0.0, 1.0, int(M)))


def check_same_grid(a: Grid, b: Grid):
    if a is not b and a != b:
        raise IncompatibleGridsError("curves are discretized on different grids")


@dataclass(frozen=True, eq=False)
class Curve:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = _frozen(self.values)
        if v.shape != (len(self.grid),):
            raise ValueError(
                f"expected {len(self.grid)} values, got shape {v.shape}"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("curve values must be finite")
        object.__setattr__(self, "values", v)

    def __sub__(self, other):
        check_same_grid(self.grid, other.grid)
        return Curve(self.grid, self.values - other.values)

    def __add__(self, other):
        check_same_grid(self.grid, other.grid)
        return Curve(self.grid, self.values + other.values)

    def __mul__(self, c):
        return Curve(self.grid, self.values * float(c))

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class FunctionalSample:
    """``n`` curves on a shared grid, stored row-wise in an ``n x M`` matrix."""

    grid: Grid
    data: np.ndarray

    def __post_init__(self):
        d = np.array(self.data, dtype=float, copy=True)
        if d.ndim == 1:
            d = d[None, :]
        if d.ndim != 2 or d.shape[0] < 1 or d.shape[1] != len(self.grid):
            raise ValueError(
                f"data must be n x {len(self.grid)} with n >= 1, got {d.shape}"
            )
        if not np.all(np.isfinite(d)):
            raise ValueError("sample contains non-finite values")
        d.setflags(write=False)
        object.__setattr__(self, "data", d)

    def __len__(self):
        return self.data.shape[0]

    def __getitem__(self, i) -> Curve:
        return Curve(self.grid, self.data[i])

    @property
    def n(self):
        return self.data.shape[0]

    def mean_curve(self) -> Curve:
        return Curve(self.grid, self.data.mean(axis=0))

    def subset(self, idx) -> "FunctionalSample":
        return FunctionalSample(self.grid, self.data[np.asarray(idx)])


@dataclass(frozen=True, eq=False)
class BasisSet:
    """``J`` functions on a grid, orthonormal under the quadrature inner product.

    On construction the Gram matrix is checked; when its largest deviation
    from the identity exceeds ``REORTHO_TOL`` the rows are re-orthonormalized
    by modified Gram-Schmidt in the weighted metric.
    """

    grid: Grid
    functions: np.ndarray
    kind: str = "custom"

    def __post_init__(self):
        f = np.array(self.functions, dtype=float, copy=True)
        if f.ndim == 1:
            f = f[None, :]
        if f.ndim != 2 or f.shape[1] != len(self.grid):
            raise ValueError(f"functions must be J x {len(self.grid)}")
        if self.kind not in ("fourier", "fpca", "custom"):
            raise ValueError(f"unknown basis kind {self.kind!r}")
        if f.shape[0] and gram_defect(f, self.grid.weights) > REORTHO_TOL:
            f = _weighted_mgs(f, self.grid.weights)
            defect = gram_defect(f, self.grid.weights)
            if defect > ORTHO_TOL:
                raise ValueError(
                    f"basis is not orthonormalizable (Gram defect {defect:.2e})"
                )
        f.setflags(write=False)
        object.__setattr__(self, "functions", f)

    def __len__(self):
        return self.functions.shape[0]

    @property
    def J(self):
        return self.functions.shape[0]

    def __getitem__(self, j) -> Curve:
        return Curve(self.grid, self.functions[j])

    def truncate(self, J: int) -> "BasisSet":
        if J > self.J:
            raise ValueError(f"basis holds only {self.J} functions, asked for {J}")
        return BasisSet(self.grid, self.functions[:J], self.kind)

    def gram(self):
        return (self.functions * self.grid.weights) @ self.functions.T


def gram_defect(functions, weights) -> float:
    g = (functions * weights) @ functions.T
    return float(np.max(np.abs(g - np.eye(g.shape[0]))))


def _weighted_mgs(f, w):
    out = np.array(f, dtype=float, copy=True)
    for j in range(out.shape[0]):
        for _ in range(2):  # second pass restores orthogonality lost to rounding
            for i in range(j):
                out[j] -= np.sum(w * out[i] * out[j]) * out[i]
        nrm = np.sqrt(np.sum(w * out[j] ** 2))
        if nrm <= 1e-14:
            raise ValueError(f"basis function {j} is linearly dependent on earlier ones")
        out[j] /= nrm
    return out


def inner_product(f: Curve, g: Curve) -> float:
    check_same_grid(f.grid, g.grid)
    return float(np.sum(f.grid.weights * f.values * g.values))


def norm(f: Curve) -> float:
    return float(np.sqrt(max(inner_product(f, f), 0.0)))


def fourier_values(J: int, t) -> np.ndarray:
    """First ``J`` Fourier functions (1, sqrt2 sin 2pi t, sqrt2 cos 2pi t, ...) at ``t``."""
    t = np.asarray(t, dtype=float)
    out = np.empty((J, t.size))
    out[0] = 1.0
    for idx in range(1, J):
        freq = (idx + 1) // 2
        if idx % 2 == 1:
            out[idx] = np.sqrt(2.0) * np.sin(2 * np.pi * freq * t)
        else:
            out[idx] = np.sqrt(2.0) * np.cos(2 * np.pi * freq * t)
    return out


def fourier_basis(J: int, grid: Grid) -> BasisSet:
    if int(J) != J or J < 1:
        raise ValueError(f"J must be an integer >= 1, got {J!r}")
    return BasisSet(grid, fourier_values(int(J), grid.points), "fourier")


def project_coeffs(x: Curve, basis: BasisSet) -> np.ndarray:
    check_same_grid(x.grid, basis.grid)
    return basis.functions @ (basis.grid.weights * x.values)


def project_sample(sample: FunctionalSample, basis: BasisSet, center=None) -> np.ndarray:
    """``n x J`` matrix of inner products with the basis, optionally after centering."""
    check_same_grid(sample.grid, basis.grid)
    data = sample.data
    if center is not None:
        data = data - (center.values if isinstance(center, Curve) else center)
    return (data * basis.grid.weights) @ basis.functions.T


def reconstruct(coeffs, basis: BasisSet) -> Curve:
    c = np.asarray(coeffs, dtype=float).ravel()
    if c.size != basis.J:
        raise ValueError(f"expected {basis.J} coefficients, got {c.size}")
    return Curve(basis.grid, c @ basis.functions)


# --- CSV curve format -------------------------------------------------------


def read_curves_csv(path) -> tuple[list[str], FunctionalSample]:
    """Read ``t, t_1..t_M`` header then ``id, v_1..v_M`` rows."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if len(rows) < 2:
        raise ValueError(f"{path}: need a header and at least one curve")
    header = rows[0]
    try:
        points = np.array([float(c) for c in header[1:]])
        ids = [r[0].strip() for r in rows[1:]]
        data = np.array([[float(c) for c in r[1:]] for r in rows[1:]])
    except ValueError as exc:
        raise ValueError(f"{path}: malformed number ({exc})") from None
    if data.ndim != 2 or data.shape[1] != points.size:
        raise ValueError(f"{path}: every row must have {points.size} values")
    if len(set(ids)) != len(ids):
        raise ValueError(f"{path}: duplicate curve ids")
    return ids, FunctionalSample(Grid(points), data)


def write_curves_csv(path, ids: Sequence[str], sample: FunctionalSample):
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [repr(float(t)) for t in sample.grid.points])
        for i, row in zip(ids, sample.data):
            w.writerow([i] + [repr(float(v)) for v in row])
