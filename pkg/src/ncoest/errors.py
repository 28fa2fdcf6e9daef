"""Exception hierarchy shared across the package."""


class NcoError(Exception):
    """Base class for every error raised by ncoest."""


# dataset / core model


class DatasetError(NcoError):
    pass


class MissingColumn(DatasetError):
    def __init__(self, column):
        super().__init__(f"missing required column {column!r}")
        self.column = column


class ColumnTypeError(DatasetError, TypeError):
    def __init__(self, column, row, value):
        super().__init__(f"column {column!r}, row {row}: cannot parse {value!r}")
        self.column = column
        self.row = row
        self.value = value


class EmptyArm(DatasetError):
    def __init__(self, arm):
        super().__init__(f"treatment arm t={arm} has no subjects")
        self.arm = arm


class InvalidDataset(DatasetError):
    def __init__(self, violations):
        msg = "; ".join(str(v) for v in violations)
        super().__init__(f"dataset violates invariants: {msg}")
        self.violations = list(violations)


class MissingCovariates(DatasetError):
    def __init__(self, method):
        super().__init__(f"{method} requires w_site and w_age columns")
        self.method = method


class ConfigError(NcoError, ValueError):
    pass


# numerics


class SingularMatrix(NcoError):
    def __init__(self, pivot_index, pivot_value=0.0):
        super().__init__(
            f"matrix is singular to working precision (pivot {pivot_index}, |value|={abs(pivot_value):.3g})"
        )
        self.pivot_index = pivot_index
        self.pivot_value = pivot_value


class NonConvergence(NcoError):
    def __init__(self, theta, residual, n_iter):
        super().__init__(f"Newton solver did not converge after {n_iter} iterations (residual {residual:.3g})")
        self.theta = theta
        self.residual = residual
        self.n_iter = n_iter


# generative model / oracle


class MeanOutOfRange(NcoError):
    def __init__(self, outcome, state, mean):
        super().__init__(f"{outcome} mean {mean:.6g} outside [0, 1] at state {state}")
        self.outcome = outcome
        self.state = state
        self.mean = mean


class CalibrationImpossible(NcoError):
    pass


class CalibrationMissing(NcoError):
    def __init__(self):
        super().__init__("intercepts are not calibrated; call oracle.calibrate_intercepts first")


# estimators


class EstimationError(NcoError):
    pass


class ZeroCell(EstimationError):
    def __init__(self, which):
        super().__init__(f"zero cell: {which} is zero")
        self.which = which


class NoInformativeStrata(EstimationError):
    def __init__(self, detail=""):
        super().__init__("no informative strata" + (f" ({detail})" if detail else ""))


class RankDeficientDesign(EstimationError):
    def __init__(self, column):
        super().__init__(f"design matrix is rank deficient at column {column!r}")
        self.column = column


# harness


class ZeroTruth(NcoError, ValueError):
    def __init__(self):
        super().__init__("relative bias is undefined for a true value of 0")


class ConstantColumn(NcoError, ValueError):
    def __init__(self, column):
        super().__init__(f"column {column!r} is constant; correlation undefined")
        self.column = column
