"""
Exception hierarchy for barron-flow.
Each family carries the process exit code the CLI reports for it.
"""

from typing import Optional, Sequence


class BarronFlowError(Exception):
    """Base class for all library errors."""

    exit_code = 1


# Input / IO (exit 2)


class InputError(BarronFlowError):
    """A file is missing, unreadable or malformed."""

    exit_code = 2


class ProblemFileError(InputError):
    """Problem file could not be parsed."""


class ExpansionFormatError(InputError):
    """Expansion text could not be parsed."""


class NetworkFormatError(InputError):
    """Network text could not be parsed."""


# Preconditions (exit 3)


class PreconditionError(BarronFlowError, ValueError):
    """An argument violates an operation precondition."""

    exit_code = 3


class DimensionMismatchError(PreconditionError):
    """Operands live in different dimensions."""


class EpsilonRangeError(PreconditionError):
    """Target accuracy outside (0, 2/lambda_min)."""

    def __init__(self, eps: float, upper: float):
        self.eps = eps
        self.upper = upper
        super().__init__(
            f"eps={eps:g} outside the admissible range (0, 2/lambda_min) = (0, {upper:.17g})"
        )


# Assumption audit (exit 4)


class AssumptionError(BarronFlowError):
    """The problem violates the assumptions the guarantees rest on."""

    exit_code = 4


class FamilyConstraintError(AssumptionError):
    """A coefficient is outside the basis family its boundary condition requires."""


class DeclaredConstantError(AssumptionError):
    """A declared ellipticity bound is violated at a sample point."""

    def __init__(self, message: str, worst_point: Optional[Sequence[float]] = None):
        self.worst_point = None if worst_point is None else tuple(float(x) for x in worst_point)
        if self.worst_point is not None:
            point = ", ".join(f"{x:.6g}" for x in self.worst_point)
            message = f"{message} (worst sample point: ({point}))"
        super().__init__(message)


class ParityViolationError(AssumptionError):
    """An expansion left the admissible parity class."""


class FlowDivergenceError(AssumptionError):
    """The flow residual grew instead of contracting."""


# Numerical failures (exit 5)


class NumericalError(BarronFlowError):
    """A numerical routine could not deliver its result."""

    exit_code = 5


class FrequencyOverflowError(NumericalError, OverflowError):
    """A frequency left the 32-bit integer range."""


class OracleError(NumericalError):
    """A reference solver failed (system not SPD, cutoff too small)."""


class SolverConvergenceError(NumericalError):
    """An iterative solver did not converge."""


class NoStationaryPointError(NumericalError):
    """A 1D profile has no interior stationary point on the interpolation interval."""


class EmptyMeasureError(NumericalError):
    """Sampling was requested from the measure of the zero function."""


class CheckFailure(BarronFlowError):
    """A verification check failed."""

    exit_code = 5
