"""Exception hierarchy.

Every error carries a short machine-readable ``code`` used by the CLI when
it reports failures as JSON.
"""


class FuncRegError(Exception):
    code = "FUNCREG_ERROR"


class IncompatibleGridsError(FuncRegError, ValueError):
    code = "INCOMPATIBLE_GRIDS"


class InsufficientDataError(FuncRegError, ValueError):
    code = "INSUFFICIENT_DATA"


class InsufficientLocalDataError(InsufficientDataError):
    code = "INSUFFICIENT_LOCAL_DATA"


class SingularDesignError(FuncRegError, ArithmeticError):
    code = "SINGULAR_DESIGN"

    def __init__(self, message, rank=None):
        super().__init__(message)
        self.rank = rank


class DegenerateError(FuncRegError, ValueError):
    """Raised when the data carry no usable signal (zero variance, zero norm)."""

    code = "DEGENERATE"


class NoAdmissibleModelError(FuncRegError, RuntimeError):
    code = "NO_ADMISSIBLE_MODEL"
