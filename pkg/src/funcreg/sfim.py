"""Single-functional index model ``m(x) = mu + g(<beta, x>)``.

The direction is estimated by the normalized average of the estimated
functional derivatives; the link ``g`` is then a univariate local-linear
smoother of the response on the projected index ``Z_i = <X_i, beta>``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateError, FuncRegError, InsufficientDataError
from .estimators import LocalLinear1D
from .funcspace import Curve, FunctionalSample, Grid, check_same_grid, norm

#: Mean-derivative norm below which the index direction is undefined.
DIRECTION_TOL = 1e-12


class IdJoinError(FuncRegError, ValueError):
    code = "ID_JOIN"


def average_derivative_direction(derivatives: FunctionalSample) -> Curve:
    """Pointwise mean of the derivative curves, scaled to unit L2 norm."""
    mean = derivatives.mean_curve()
    nrm = norm(mean)
    if nrm < DIRECTION_TOL:
        raise DegenerateError("mean derivative vanishes; index direction is undefined")
    return mean * (1.0 / nrm)


@dataclass(frozen=True, eq=False)
class SfimFit:
    beta_hat: Curve
    link: LocalLinear1D
    index_scores: np.ndarray
    fitted: np.ndarray
    pearson_r: float

    def index(self, sample: FunctionalSample) -> np.ndarray:
        check_same_grid(sample.grid, self.beta_hat.grid)
        return sample.data @ (sample.grid.weights * self.beta_hat.values)

    def predict(self, sample: FunctionalSample) -> np.ndarray:
        return self.link.predict(self.index(sample))[0]


def fit_sfim(sample: FunctionalSample, y, derivatives: FunctionalSample) -> SfimFit:
    """Estimate the index direction from ``derivatives`` and smooth ``y`` on it."""
    y = np.asarray(y, dtype=float).ravel()
    if sample.n < 10:
        raise InsufficientDataError("the index model needs at least 10 curves")
    if y.size != sample.n or derivatives.n != sample.n:
        raise ValueError("sample, responses and derivatives must have the same length")
    check_same_grid(sample.grid, derivatives.grid)
    beta = average_derivative_direction(derivatives)
    z = sample.data @ (sample.grid.weights * beta.values)
    if np.ptp(z) <= 1e-12 * max(1.0, float(np.max(np.abs(z)))):
        raise DegenerateError("projected index is constant")
    link = LocalLinear1D(z, y)
    fitted = link.predict(z)[0]
    if np.std(fitted) == 0 or np.std(y) == 0:
        r = float("nan")
    else:
        r = float(np.corrcoef(fitted, y)[0, 1])
    return SfimFit(beta, link, z, fitted, r)


def restrict_domain(sample: FunctionalSample, lo: float, hi: float) -> FunctionalSample:
    """Keep the grid points in ``[lo, hi]``; weights are recomputed by the trapezoid rule."""
    if not 0 <= lo < hi <= 1:
        raise ValueError(f"need 0 <= lo < hi <= 1, got {lo}, {hi}")
    pts = sample.grid.points
    keep = (pts >= lo - 1e-12) & (pts <= hi + 1e-12)
    if keep.sum() < 2:
        raise ValueError(f"fewer than two grid points in [{lo}, {hi}]")
    if keep.all():
        return sample
    return FunctionalSample(Grid(pts[keep]), sample.data[:, keep])


def read_response_csv(path) -> dict:
    """Read an ``id, y`` CSV (header row required) into a dict."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if len(rows) < 2:
        raise ValueError(f"{path}: need a header and at least one response")
    out = {}
    for r in rows[1:]:
        if len(r) < 2:
            raise ValueError(f"{path}: every row needs an id and a value")
        key = r[0].strip()
        if key in out:
            raise ValueError(f"{path}: duplicate id {key!r}")
        try:
            out[key] = float(r[1])
        except ValueError:
            raise ValueError(f"{path}: malformed response {r[1]!r}") from None
    return out


def join_responses(ids, responses: dict) -> np.ndarray:
    """Responses ordered like ``ids``; both sides must hold exactly the same ids."""
    missing = [i for i in ids if i not in responses]
    extra = sorted(set(responses) - set(ids))
    if missing or extra:
        raise IdJoinError(
            f"ids do not match: {len(missing)} curves without response "
            f"{missing[:5]}, {len(extra)} responses without curve {extra[:5]}"
        )
    return np.array([responses[i] for i in ids])
