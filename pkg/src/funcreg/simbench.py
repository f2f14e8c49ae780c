"""Simulation models with known truth, ORMSEP metrics and a seeded benchmark runner.

Models (all on the Fourier system ``phi_1, phi_2, ...``):

* ``M1``: ``X = sum_{j<=J} U_j phi_j``, ``m(X) = sum_j exp(-U_j^2)``.
* ``M2``: as M1 plus ``eta = sum_{j=J+1}^{2J} V_j phi_j`` with ``V_j ~ U[-b, b]``
  and ``b^2 = rho / (1 - rho)``.
* ``M3``: M2 predictors with ``m_a(X) = (1-a) <beta, X> + a sum_j exp(-U_j^2)``,
  ``beta = sum_{j<=J} phi_j``.

``U_j ~ U[-1, 1]``; the noise is Gaussian with variance ``nsr`` times the
empirical variance of the noiseless responses of the run (train and test).
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .errors import DegenerateError, FuncRegError
from .estimators import (
    FunctionalLocalLinear,
    functional_linear_fit,
    functional_linear_loo,
    functional_linear_predict,
    my_additive_fit,
    my_predict,
)
from .fpca import fit_fpca
from .funcspace import FunctionalSample, fourier_basis, make_uniform_grid
from .kernels import DEFAULT_KERNEL, Kernel
from .selection import SelectionGrid, select_all, select_reg

ESTIMATORS = ("L", "LC", "LL", "MY")
MODELS = ("M1", "M2", "M3")


@dataclass(frozen=True)
class SimConfig:
    model: str = "M1"
    n_train: int = 100
    n_test: int = 500
    nsr: float = 0.05
    rho: float = 0.05
    a: float = 1.0
    grid_M: int = 101
    seed: int = 0
    runs: int = 1
    J_true: int = 4
    basis: str | None = None  # "fpca" or "true_fourier"; None picks per model
    criterion: str = "cv"
    B: int = 100
    kernel: str = DEFAULT_KERNEL.value

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {MODELS}")
        if self.n_train < 10 or self.n_test < 1:
            raise ValueError("need n_train >= 10 and n_test >= 1")
        if self.nsr < 0:
            raise ValueError("nsr must be >= 0")
        if not 0 <= self.rho < 1:
            raise ValueError("rho must lie in [0, 1)")
        if not 0 <= self.a <= 1:
            raise ValueError("a must lie in [0, 1]")
        if self.runs < 1 or self.J_true < 1:
            raise ValueError("runs and J_true must be >= 1")
        if self.basis not in (None, "fpca", "true_fourier"):
            raise ValueError("basis must be 'fpca' or 'true_fourier'")
        Kernel(self.kernel)

    @property
    def basis_kind(self):
        if self.basis is not None:
            return self.basis
        # M1 studies bandwidths only and is run on the true subspace
        return "true_fourier" if self.model == "M1" else "fpca"

    def to_dict(self):
        return asdict(self)

    def digest(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


@dataclass(frozen=True, eq=False)
class SimTruth:
    X: FunctionalSample
    y: np.ndarray
    m_true: np.ndarray
    deriv_true: FunctionalSample
    sigma_eps2: float
    n_train: int

    def split(self):
        """``(train, test)`` as tuples ``(X, y, m_true, deriv_true)``."""
        n = self.n_train
        parts = []
        for sl in (slice(0, n), slice(n, None)):
            parts.append((
                FunctionalSample(self.X.grid, self.X.data[sl]),
                self.y[sl],
                self.m_true[sl],
                FunctionalSample(self.X.grid, self.deriv_true.data[sl]),
            ))
        return tuple(parts)


def structural_bound(rho):
    if not 0 <= rho < 1:
        raise ValueError("rho must lie in [0, 1)")
    return float(np.sqrt(rho / (1 - rho)))


def model_truth(model, U, V=None, a=1.0, grid=None, J=None):
    """Curves, noiseless responses and derivative curves for given scores.

    ``U`` is ``N x J``; ``V`` (same shape) carries the structural part of M2/M3.
    """
    U = np.atleast_2d(np.asarray(U, dtype=float))
    J = U.shape[1] if J is None else J
    grid = grid or make_uniform_grid(101)
    phi = fourier_basis(2 * J, grid).functions
    X = U @ phi[:J]
    if model != "M1" and V is not None:
        X = X + np.atleast_2d(V) @ phi[J: 2 * J]
    bump = np.exp(-U ** 2)
    nonlin = bump.sum(axis=1)
    nonlin_d = (-2 * U * bump) @ phi[:J]
    if model == "M3":
        beta = phi[:J].sum(axis=0)
        # <beta, X> = sum_j U_j: beta is orthogonal to the structural part
        m = (1 - a) * U.sum(axis=1) + a * nonlin
        d = (1 - a) * beta[None, :] + a * nonlin_d
    else:
        m, d = nonlin, nonlin_d
    return FunctionalSample(grid, X), m, FunctionalSample(grid, d)


def run_seed_sequence(seed, run_index, stream=0):
    return np.random.SeedSequence(int(seed), spawn_key=(int(run_index), int(stream)))


def simulate(config: SimConfig, run_index: int = 0) -> SimTruth:
    rng = np.random.default_rng(run_seed_sequence(config.seed, run_index))
    N = config.n_train + config.n_test
    J = config.J_true
    U = rng.uniform(-1, 1, size=(N, J))
    V = None
    if config.model != "M1":
        b = structural_bound(config.rho)
        V = rng.uniform(-b, b, size=(N, J))
    X, m, d = model_truth(config.model, U, V, config.a, make_uniform_grid(config.grid_M), J)
    sigma2 = config.nsr * float(np.var(m))
    y = m + rng.normal(0.0, np.sqrt(sigma2), size=N)
    return SimTruth(X, y, m, d, sigma2, config.n_train)


# --- metrics --------------------------------------------------------------------


def ormsep_reg(m_true, m_hat) -> float:
    """Squared prediction error relative to the spread of the truth."""
    m_true = np.asarray(m_true, dtype=float)
    m_hat = np.asarray(m_hat, dtype=float)
    if m_true.shape != m_hat.shape or m_true.size < 2:
        raise ValueError("need two equal-length vectors of size >= 2")
    den = np.mean((m_true - m_true.mean()) ** 2)
    if den <= 0:
        raise DegenerateError("the truth is constant")
    return float(np.mean((m_true - m_hat) ** 2) / den)


def _sq_norms(rows, weights):
    return rows ** 2 @ weights


def ormsep_deriv_numerator(deriv_true: FunctionalSample, deriv_hat) -> float:
    hat = deriv_hat.data if isinstance(deriv_hat, FunctionalSample) else np.asarray(deriv_hat)
    if hat.shape != deriv_true.data.shape:
        raise ValueError("derivative samples must have matching shapes")
    return float(np.mean(_sq_norms(deriv_true.data - hat, deriv_true.grid.weights)))


def ormsep_deriv(deriv_true: FunctionalSample, deriv_hat) -> float:
    """Mean squared L2 error over the mean squared L2 spread of the true derivatives."""
    num = ormsep_deriv_numerator(deriv_true, deriv_hat)
    spread = deriv_true.data - deriv_true.data.mean(axis=0)
    den = float(np.mean(_sq_norms(spread, deriv_true.grid.weights)))
    if den <= 1e-12:
        raise DegenerateError("true derivatives do not vary; use the numerator only")
    return num / den


# --- benchmark ------------------------------------------------------------------


ROW_FIELDS = ("run", "estimator", "ormsep_reg", "ormsep_deriv", "deriv_metric",
              "J_opt", "k_reg", "k_deriv", "note")


def _deriv_metric(truth, hat):
    try:
        return ormsep_deriv(truth, hat), "ratio"
    except DegenerateError:
        return ormsep_deriv_numerator(truth, hat), "numerator"


def _row(run, est, reg=np.nan, deriv=np.nan, metric="", J=None, k_reg=None, k_deriv=None,
         note=""):
    return {"run": run, "estimator": est, "ormsep_reg": reg, "ormsep_deriv": deriv,
            "deriv_metric": metric, "J_opt": J, "k_reg": k_reg, "k_deriv": k_deriv,
            "note": note}


def _fit_ll(cfg, Xtr, ytr, Xte, mte, dte, fpca, kernel, run_index):
    if cfg.basis_kind == "true_fourier":
        basis = fourier_basis(cfg.J_true, Xtr.grid)
        grid = SelectionGrid.default(Xtr.n, J_max=cfg.J_true)
        grid = SelectionGrid(grid.k_candidates, (cfg.J_true,))
    else:
        basis = fpca.eigenfunctions
        grid = SelectionGrid.default(Xtr.n, available=basis.J)
    boot_seed = int(run_seed_sequence(cfg.seed, run_index, 1).generate_state(1)[0])
    sel = select_all(Xtr, ytr, basis, grid, cfg.criterion, cfg.B, boot_seed, kernel=kernel)
    model = FunctionalLocalLinear(Xtr, ytr, basis.truncate(sel.J_opt) if sel.J_opt else None,
                                  kernel)
    values, coeffs = model.predict(Xte, sel.J_opt, sel.k_reg, sel.k_deriv)
    if not np.all(np.isfinite(values)) or not np.all(np.isfinite(coeffs)):
        raise FuncRegError("degenerate local fit at a test curve")
    reg = ormsep_reg(mte, values)
    deriv, metric = _deriv_metric(dte, model.derivative_curves(coeffs))
    return _row(run_index, "LL", reg, deriv, metric, sel.J_opt, sel.k_reg, sel.k_deriv)


def _fit_lc(cfg, Xtr, ytr, Xte, mte, kernel, run_index):
    grid = SelectionGrid.default(Xtr.n, J_max=0)
    sel = select_reg(Xtr, ytr, None, grid, "cv", kernel)
    model = FunctionalLocalLinear(Xtr, ytr, None, kernel)
    values, _ = model.predict(Xte, 0, sel.k_reg)
    bad = ~np.isfinite(values)
    note = ""
    if bad.any():
        values = np.where(bad, ytr.mean(), values)
        note = f"global-mean fallback at {int(bad.sum())} test curves"
    return _row(run_index, "LC", ormsep_reg(mte, values), J=0, k_reg=sel.k_reg, note=note)


def _fit_l(cfg, Xtr, ytr, Xte, mte, dte, fpca, run_index):
    basis = fpca.eigenfunctions
    J_max = min(basis.J, Xtr.n - 2)
    cv = [functional_linear_loo(Xtr, ytr, basis, J) for J in range(J_max + 1)]
    J = int(np.argmin(cv))
    fit = functional_linear_fit(Xtr, ytr, basis, J)
    values, deriv = functional_linear_predict(fit, Xte)
    hat = np.broadcast_to(deriv.values, dte.data.shape)
    d, metric = _deriv_metric(dte, hat)
    return _row(run_index, "L", ormsep_reg(mte, values), d, metric, J)


def _fit_my(cfg, Xtr, ytr, Xte, mte, dte, fpca, kernel, run_index):
    fit = my_additive_fit(Xtr, ytr, 0.9, fpca=fpca, kernel=kernel)
    values, deriv, clamped = my_predict(fit, Xte, return_clamped=True)
    d, metric = _deriv_metric(dte, deriv)
    note = f"{int(clamped.sum())} test curves clamped" if clamped.any() else ""
    if fit.warnings:
        note = "; ".join([note] + fit.warnings if note else fit.warnings)
    ks = ",".join(str(c.k) if c is not None else "-" for c in fit.components)
    return _row(run_index, "MY", ormsep_reg(mte, values), d, metric, fit.J, ks, note=note)


def run_single(cfg: SimConfig, run_index: int, estimators=ESTIMATORS):
    """One Monte-Carlo replicate: returns ``(rows, timings)``."""
    truth = simulate(cfg, run_index)
    (Xtr, ytr, _, _), (Xte, _, mte, dte) = truth.split()
    kernel = Kernel(cfg.kernel)
    fpca = None
    if cfg.basis_kind == "fpca" or {"L", "MY"} & set(estimators):
        fpca = fit_fpca(Xtr, min(10, Xtr.n - 5) if cfg.basis_kind == "fpca" else 20)
    jobs = {
        "L": lambda: _fit_l(cfg, Xtr, ytr, Xte, mte, dte, fpca, run_index),
        "LC": lambda: _fit_lc(cfg, Xtr, ytr, Xte, mte, kernel, run_index),
        "LL": lambda: _fit_ll(cfg, Xtr, ytr, Xte, mte, dte, fpca, kernel, run_index),
        "MY": lambda: _fit_my(cfg, Xtr, ytr, Xte, mte, dte, fpca, kernel, run_index),
    }
    rows, timings = [], []
    for est in ESTIMATORS:
        if est not in estimators:
            continue
        t0 = time.perf_counter()
        try:
            row = jobs[est]()
        except (FuncRegError, ValueError, np.linalg.LinAlgError) as exc:
            row = _row(run_index, est, note=f"failed: {type(exc).__name__}: {exc}")
        rows.append(row)
        timings.append({"run": run_index, "estimator": est,
                        "wallclock_seconds": time.perf_counter() - t0})
    return rows, timings


@dataclass
class BenchReport:
    config: SimConfig
    rows: list
    timings: list = field(default_factory=list)
    manifest: dict = field(default_factory=dict)

    def aggregates(self):
        """Mean and sd (ddof=1) per estimator and metric, over finite cells."""
        out = {}
        for est in sorted({r["estimator"] for r in self.rows}):
            rows = [r for r in self.rows if r["estimator"] == est]
            entry = {"runs": len(rows)}
            for key in ("ormsep_reg", "ormsep_deriv"):
                vals = np.array([r[key] for r in rows], dtype=float)
                vals = vals[np.isfinite(vals)]
                entry[key] = {
                    "mean": float(vals.mean()) if vals.size else None,
                    "sd": float(vals.std(ddof=1)) if vals.size > 1 else None,
                    "count": int(vals.size),
                }
            Js = [r["J_opt"] for r in rows if r["J_opt"] is not None]
            entry["J_opt_counts"] = {str(j): Js.count(j) for j in sorted(set(Js))}
            if est == "LL":
                for key in ("k_reg", "k_deriv"):
                    ks = np.array([r[key] for r in rows if r[key] is not None], dtype=float)
                    entry[key] = {"mean": float(ks.mean()) if ks.size else None,
                                  "sd": float(ks.std(ddof=1)) if ks.size > 1 else None}
            out[est] = entry
        return out

    def column(self, estimator, key):
        return np.array([r[key] for r in self.rows if r["estimator"] == estimator],
                        dtype=float)

    def csv_text(self):
        """Per-run rows; every row also carries the seed, config hash and tool version."""
        stamp = {"seed": str(self.config.seed), "config_sha256": self.config.digest(),
                 "tool_version": __version__}
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=ROW_FIELDS + tuple(stamp), lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow({**{k: _fmt(r[k]) for k in ROW_FIELDS}, **stamp})
        return buf.getvalue()

    def aggregate_json(self):
        doc = {"manifest": self.manifest, "config": self.config.to_dict(),
               "config_sha256": self.config.digest(), "seed": self.config.seed,
               "tool_version": __version__, "aggregates": self.aggregates()}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def timings_csv_text(self):
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=("run", "estimator", "wallclock_seconds"),
                           lineterminator="\n")
        w.writeheader()
        w.writerows(self.timings)
        return buf.getvalue()


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v) if np.isfinite(v) else ""
    return str(v)


def run_benchmark(config: SimConfig, estimators=ESTIMATORS, threads=1,
                  progress=None) -> BenchReport:
    """Run ``config.runs`` seeded replicates; output does not depend on ``threads``."""
    unknown = set(estimators) - set(ESTIMATORS)
    if unknown or not estimators:
        raise ValueError(f"estimators must be drawn from {ESTIMATORS}")
    estimators = tuple(e for e in ESTIMATORS if e in set(estimators))

    def one(i):
        out = run_single(config, i, estimators)
        if progress:
            progress(i)
        return out

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, range(config.runs)))
    else:
        results = [one(i) for i in range(config.runs)]
    rows = [r for res in results for r in res[0]]
    timings = [t for res in results for t in res[1]]
    return BenchReport(config, rows, timings)
