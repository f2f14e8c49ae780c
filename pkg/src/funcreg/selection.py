"""Automatic tuning: dimension ``J`` and neighbor counts for the LL estimators.

``select_reg`` minimizes leave-one-out CV (or AICc) jointly over the
dimension and the regression bandwidth. ``wild_bootstrap_derivative_bandwidth``
then picks a separate bandwidth for the functional derivative: residuals of
the regression fit are perturbed by mean-zero, unit-variance multipliers,
the derivative is re-estimated on each bootstrap sample and averaged into a
pilot, and the chosen ``k`` brings the leave-one-out derivative closest to
that pilot.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NoAdmissibleModelError
from .estimators import FunctionalLocalLinear, _self_weights, default_k_grid
from .fpca import FpcaModel
from .funcspace import BasisSet, FunctionalSample
from .kernels import DEFAULT_KERNEL

GOLDEN = (1 + math.sqrt(5)) / 2
#: Mammen two-point law: mean 0, variance 1, third moment 1.
MAMMEN_VALUES = (1 - GOLDEN, GOLDEN)
MAMMEN_P_LOW = (5 + math.sqrt(5)) / 10


def mammen_multipliers(rng: np.random.Generator, size):
    u = rng.random(size)
    return np.where(u < MAMMEN_P_LOW, MAMMEN_VALUES[0], MAMMEN_VALUES[1])


def rademacher_multipliers(rng: np.random.Generator, size):
    return np.where(rng.random(size) < 0.5, -1.0, 1.0)


MULTIPLIERS = {"mammen": mammen_multipliers, "rademacher": rademacher_multipliers}


def replicate_rng(seed: int, b: int) -> np.random.Generator:
    """Independent generator for bootstrap replicate ``b``; depends only on ``(seed, b)``."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(b),)))


def _basis_of(basis_or_fpca):
    if isinstance(basis_or_fpca, FpcaModel):
        return basis_or_fpca.eigenfunctions
    return basis_or_fpca


@dataclass(frozen=True)
class SelectionGrid:
    k_candidates: tuple
    J_candidates: tuple

    def __post_init__(self):
        ks = tuple(int(k) for k in self.k_candidates)
        Js = tuple(int(j) for j in self.J_candidates)
        if not ks or not Js:
            raise ValueError("selection grid must be nonempty")
        if min(Js) < 0:
            raise ValueError("dimensions must be >= 0")
        object.__setattr__(self, "k_candidates", ks)
        object.__setattr__(self, "J_candidates", Js)

    def validate(self, n):
        if min(self.k_candidates) < 2 or max(self.k_candidates) > n - 1:
            raise ValueError(f"neighbor counts must lie in [2, {n - 1}]")

    @classmethod
    def default(cls, n, J_max=None, available=None):
        """Dimensions ``0..J_max`` and ~20 geometric neighbor counts.

        ``J_max`` defaults to ``min(10, n - 5)``, capped by ``available``
        basis functions. Neighbor counts run from ``max(J_max + 2, 5)`` to
        ``floor(0.9 n)``.
        """
        J_max = min(10, n - 5) if J_max is None else J_max
        if available is not None:
            J_max = min(J_max, available)
        J_max = max(J_max, 0)
        ks = default_k_grid(n, lo=max(J_max + 2, 5))
        return cls(tuple(ks), tuple(range(J_max + 1)))


@dataclass
class SelectionResult:
    J_opt: int
    k_reg: int
    criterion: str
    grid: SelectionGrid
    cv_trace: np.ndarray
    k_deriv: int | None = None
    boot_trace: dict = field(default_factory=dict)
    seed: int | None = None
    B: int | None = None
    multiplier: str | None = None

    def to_dict(self):
        def fin(v):
            return float(v) if np.isfinite(v) else None

        return {
            "J_opt": self.J_opt,
            "k_reg": self.k_reg,
            "k_deriv": self.k_deriv,
            "criterion": self.criterion,
            "J_candidates": list(self.grid.J_candidates),
            "k_candidates": list(self.grid.k_candidates),
            "cv_trace": [[fin(v) for v in row] for row in self.cv_trace],
            "boot_trace": {str(k): fin(v) for k, v in self.boot_trace.items()},
            "seed": self.seed,
            "B": self.B,
            "multiplier": self.multiplier,
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


# --- criteria -----------------------------------------------------------------


def _loo_scores(model: FunctionalLocalLinear, k, Js, neighbors=None):
    fits = model.sample_fits(k, J_max=max(Js), loo=True, neighbors=neighbors)
    out = {}
    for J in Js:
        a = fits.solve(J, model.y)[:, 0]
        out[J] = float(np.mean((model.y - a) ** 2)) if np.all(np.isfinite(a)) else np.inf
    return out


def _aicc_scores(model: FunctionalLocalLinear, k, Js, neighbors=None):
    fits = model.sample_fits(k, J_max=max(Js), loo=False, neighbors=neighbors)
    n = model.y.size
    out = {}
    for J in Js:
        a = fits.solve(J, model.y)[:, 0]
        if not np.all(np.isfinite(a)):
            out[J] = np.inf
            continue
        tr = float(np.sum(_self_weights(fits, J)))
        out[J] = aicc_formula(model.y - a, tr, n)
    return out


def aicc_formula(residuals, trace_h, n):
    """``log(sigma2) + 1 + 2 (tr H + 1) / (n - tr H - 2)``; infinite when overparameterized."""
    if trace_h + 2 >= n:
        return np.inf
    sigma2 = float(np.mean(np.asarray(residuals) ** 2))
    if sigma2 <= 0:
        return -np.inf
    return math.log(sigma2) + 1 + 2 * (trace_h + 1) / (n - trace_h - 2)


def loo_cv_score(sample: FunctionalSample, y, basis, J, k, kernel=DEFAULT_KERNEL) -> float:
    """Mean squared leave-one-out error; the kNN radius is recomputed without curve i."""
    model = FunctionalLocalLinear(sample, y, _basis_of(basis) if J else None, kernel)
    return _loo_scores(model, k, [J])[J]


def aicc_score(sample: FunctionalSample, y, basis, J, k, kernel=DEFAULT_KERNEL) -> float:
    model = FunctionalLocalLinear(sample, y, _basis_of(basis) if J else None, kernel)
    return _aicc_scores(model, k, [J])[J]


def _argmin_parsimonious(trace, Js, ks):
    """Minimum of a (J, k) table; ties go to the smallest J, then the smallest k."""
    best = np.min(trace)
    if not np.isfinite(best):
        raise NoAdmissibleModelError("every candidate model is degenerate")
    for a, J in sorted(enumerate(Js), key=lambda t: t[1]):
        cols = [b for b in range(len(ks)) if trace[a, b] == best]
        if cols:
            b = min(cols, key=lambda c: ks[c])
            return J, ks[b]
    raise AssertionError("unreachable")


def select_reg(sample: FunctionalSample, y, basis, grid: SelectionGrid | None = None,
               criterion="cv", kernel=DEFAULT_KERNEL) -> SelectionResult:
    """Exhaustive search of the (dimension, neighbor count) grid.

    ``basis`` is an :class:`FpcaModel` or a :class:`BasisSet`; ``J = 0``
    (pure kernel regression) is a legal candidate.
    """
    basis = _basis_of(basis)
    n = sample.n
    grid = grid or SelectionGrid.default(n, available=basis.J if basis is not None else 0)
    grid.validate(n)
    Js, ks = grid.J_candidates, grid.k_candidates
    if basis is None and max(Js) > 0 or basis is not None and max(Js) > basis.J:
        raise ValueError("dimension candidates exceed the basis size")
    model = FunctionalLocalLinear(sample, y, basis, kernel)
    if criterion == "cv":
        nb, score = model.sample_neighbors(loo=True), _loo_scores
    elif criterion == "aicc":
        nb, score = model.sample_neighbors(loo=False), _aicc_scores
    else:
        raise ValueError(f"unknown criterion {criterion!r}")
    trace = np.full((len(Js), len(ks)), np.inf)
    for b, k in enumerate(ks):
        res = score(model, k, Js, neighbors=nb)
        for a, J in enumerate(Js):
            trace[a, b] = res[J]
    J_opt, k_reg = _argmin_parsimonious(trace, Js, ks)
    return SelectionResult(J_opt, k_reg, criterion, grid, trace)


def wild_bootstrap_derivative_bandwidth(sample: FunctionalSample, y, basis, J_opt, k_reg,
                                        k_candidates, B=100, seed=0, multiplier="mammen",
                                        kernel=DEFAULT_KERNEL):
    """Neighbor count for the derivative estimator, chosen against a bootstrap pilot.

    1. residuals ``e_i = Y_i - m(X_i)`` of the in-sample fit at ``(J_opt, k_reg)``;
    2. ``B`` bootstrap responses ``m(X_i) + e_i V_i`` with iid multipliers ``V``;
    3. the pilot derivative at ``X_i`` is the average over replicates of the
       derivative re-estimated at ``(J_opt, k_reg)``.

    Each candidate ``k`` is scored by the mean squared L2 distance between the
    pilot and the leave-one-out derivative at ``X_i``. Returns
    ``(k_deriv, trace)`` where ``trace`` maps every candidate to its score.
    """
    basis = _basis_of(basis)
    y = np.asarray(y, dtype=float)
    if B < 1:
        raise ValueError("B must be >= 1")
    ks = [int(k) for k in k_candidates]
    if not ks:
        raise ValueError("k_candidates must be nonempty")
    if J_opt == 0:
        # no derivative to estimate; the regression bandwidth is kept
        return int(k_reg), {k: 0.0 for k in ks}
    draw = MULTIPLIERS[multiplier]
    model = FunctionalLocalLinear(sample, y, basis.truncate(J_opt), kernel)
    fits = model.sample_fits(k_reg, J_max=J_opt, loo=False)
    fitted = fits.solve(J_opt, y)[:, 0]
    if not np.all(np.isfinite(fitted)):
        raise NoAdmissibleModelError("regression fit is degenerate at the selected bandwidth")
    resid = y - fitted
    V = np.column_stack([draw(replicate_rng(seed, b), sample.n) for b in range(B)])
    y_boot = fitted[:, None] + resid[:, None] * V
    pilot = fits.solve(J_opt, y_boot)[:, 1:, :].mean(axis=2)

    nb = model.sample_neighbors(loo=True)
    trace = {}
    for k in ks:
        loo = model.sample_fits(k, J_max=J_opt, loo=True, neighbors=nb).solve(J_opt, y)[:, 1:]
        # coordinates in an orthonormal basis: squared L2 norm = squared coordinate norm
        err = np.sum((pilot - loo) ** 2, axis=1)
        trace[k] = float(np.mean(err)) if np.all(np.isfinite(err)) else np.inf
    best = min(trace.values())
    if not np.isfinite(best):
        raise NoAdmissibleModelError("every derivative bandwidth is degenerate")
    return min(k for k, v in trace.items() if v == best), trace


def select_all(sample: FunctionalSample, y, basis, grid: SelectionGrid | None = None,
               criterion="cv", B=100, seed=0, multiplier="mammen",
               kernel=DEFAULT_KERNEL) -> SelectionResult:
    """Dimension and regression bandwidth, then the derivative bandwidth."""
    res = select_reg(sample, y, basis, grid, criterion, kernel)
    k_deriv, boot = wild_bootstrap_derivative_bandwidth(
        sample, y, basis, res.J_opt, res.k_reg, res.grid.k_candidates, B, seed,
        multiplier, kernel,
    )
    res.k_deriv, res.boot_trace = k_deriv, boot
    res.seed, res.B, res.multiplier = int(seed), int(B), multiplier
    return res
