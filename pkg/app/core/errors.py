"""
Laboratory Errors

Exception hierarchy shared by every service. Each class carries the exit
code the command layer reports, so handlers translate failures uniformly:

    0  all checks passed
    1  a verification check failed
    2  usage / configuration / precondition error
    3  numerical abort (NaN, CFL, singular system)
"""

from typing import Optional


class LabError(Exception):
    """Base class for all laboratory failures."""

    exit_code = 1


class CheckFailure(LabError):
    """An enabled verification check did not pass."""

    exit_code = 1


# =============================================================================
# Usage / precondition errors (exit 2)
# =============================================================================

class ConfigError(LabError):
    """Run configuration could not be parsed or validated."""

    exit_code = 2

    def __init__(self, message: str, key: Optional[str] = None):
        super().__init__(message)
        self.key = key


class GridError(LabError):
    exit_code = 2


class GridMismatchError(LabError):
    exit_code = 2


class MeanModeError(LabError):
    """Inverse Laplacian requested for a field with a nonzero mean mode."""

    exit_code = 2

    def __init__(self, mean: complex):
        super().__init__(f"field has nonzero mean mode {mean!r}; subtract it before applying the inverse Laplacian")
        self.mean = mean


class AxisymmetryError(LabError):
    exit_code = 2

    def __init__(self, deviation: float):
        super().__init__(f"field is not axisymmetric (relative rotation deviation {deviation:.3e})")
        self.deviation = deviation


class OracleSizeError(LabError):
    exit_code = 2


# =============================================================================
# Numerical aborts (exit 3)
# =============================================================================

class NumericalAbort(LabError):
    exit_code = 3


class NonFiniteFieldError(NumericalAbort):
    def __init__(self, label: str):
        super().__init__(f"non-finite values in field '{label}'")
        self.label = label


class CFLViolation(NumericalAbort):
    def __init__(self, cfl: float, limit: float):
        super().__init__(f"advective CFL {cfl:.4f} exceeds limit {limit}")
        self.cfl = cfl
        self.limit = limit


class SingularSystemError(NumericalAbort):
    def __init__(self, index: int, pivot: float):
        super().__init__(f"tridiagonal system {index} is singular (pivot {pivot:.3e})")
        self.index = index
        self.pivot = pivot


class SimulationAbort(NumericalAbort):
    """A run stopped on a numerical failure.

    Attributes:
        step: index of the step that failed
        record: diagnostics gathered before the failure
        snapshot_path: dump of the last good state, if one was written
    """

    def __init__(self, step: int, cause: Exception, record=None, snapshot_path=None):
        super().__init__(f"run aborted at step {step}: {cause}")
        self.step = step
        self.cause = cause
        self.record = record
        self.snapshot_path = snapshot_path
