"""Functional local linear regression of a scalar response on a random curve."""

__version__ = "0.1.0"

from .errors import (
    DegenerateError,
    FuncRegError,
    IncompatibleGridsError,
    InsufficientDataError,
    InsufficientLocalDataError,
    NoAdmissibleModelError,
    SingularDesignError,
)
from .estimators import (
    FunctionalLocalLinear,
    LocalFit,
    functional_linear_fit,
    functional_linear_predict,
    ll_hat_diagonal,
    local_constant_fit,
    local_linear_fit,
    my_additive_fit,
    my_predict,
)
from .fpca import FpcaModel, dimension_for_variance, fit_fpca, scores
from .funcspace import (
    BasisSet,
    Curve,
    FunctionalSample,
    Grid,
    fourier_basis,
    inner_product,
    make_uniform_grid,
    norm,
    project_coeffs,
    reconstruct,
)
from .kernels import Kernel, kernel_eval, knn_bandwidth, pairwise_distances
from .selection import (
    SelectionGrid,
    SelectionResult,
    aicc_score,
    loo_cv_score,
    select_all,
    select_reg,
    wild_bootstrap_derivative_bandwidth,
)
