"""Exception types shared across the package.

The CLI maps ConfigError to exit code 2 and NumericError to exit code 3;
everything else is a generic failure.
"""


class DcssError(Exception):
    """Base class for all package errors."""


class ShapeError(DcssError, ValueError):
    """Array dimensions do not satisfy an operation's contract."""


class ConfigError(DcssError, ValueError):
    """Invalid configuration or precondition on user-settable values."""


class NumericError(DcssError, ArithmeticError):
    """Non-finite values or numerically degenerate state."""


class DegenerateClusterError(NumericError):
    """A cluster's total membership mass collapsed below tolerance."""

    def __init__(self, cluster, mass):
        self.cluster = cluster
        self.mass = mass
        super().__init__(f"cluster {cluster} has degenerate membership mass {mass:.3e}")


class ContractError(DcssError, ValueError):
    """An input violates a documented invariant (e.g. rows not on the simplex)."""


class FormatError(DcssError, ValueError):
    """Malformed external file (CSV or IDX)."""


class ExperimentError(DcssError, RuntimeError):
    """A pipeline stage failed; wraps the original error and names the stage."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage {stage!r} failed: {cause}")
