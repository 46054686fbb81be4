"""Error types shared across the package."""


class QslError(Exception):
    """Base class for all errors raised by this package."""


class InvalidSpec(QslError):
    """A state/parameter/config specification is malformed or out of range."""


class DimMismatch(QslError):
    """Operands live on different truncated spaces."""


class TruncationLeak(QslError):
    """Probability weight beyond the retained Fock levels exceeds tolerance."""


class StepFailure(QslError):
    """Adaptive integrator could not reach the requested accuracy."""


class NotReached(QslError):
    """Target condition not met within the time cap."""


class ConvergenceFailure(QslError):
    """A series summation failed to converge within its term budget."""


class DimTooSmall(QslError):
    """Truncation dimension too small for the requested computation."""


class DimTooLarge(QslError):
    """Dense computation refused: dimension above the safety cap."""


class BelowBifurcation(QslError):
    """Parameters lie at or below the oscillation threshold (gain <= loss)."""


class GridTooSmall(QslError):
    """Phase-space grid extent clips non-negligible weight at the boundary."""


class GridTooCoarse(QslError):
    """Phase-space grid has too few points for the requested stencils."""


class GridMismatch(QslError):
    """Two grids expected to share axes do not."""


class NotNormalized(QslError):
    """Quasiprobability does not integrate to one within tolerance."""


class MissingCoefficients(QslError):
    """Spectral reconstruction requested without projection coefficients."""


class ConfigError(QslError):
    """Experiment configuration failed to parse or validate."""


class ParseError(ConfigError):
    """Config file is not syntactically valid; carries line/column when known."""

    def __init__(self, message, line=None, column=None):
        if line is not None:
            where = f"line {line}" + (f", column {column}" if column is not None else "")
            message = f"{message} ({where})"
        super().__init__(message)
        self.line = line
        self.column = column


class MissingInput(QslError):
    """A required input file or column is absent."""


class DegenerateClusterWarning(UserWarning):
    """Eigenvalue cluster too close to separate; biorthogonality may degrade."""
