"""
Banded Radial Operators

Tridiagonal operators along r and their batched Thomas factorizations.

Storage convention (system axis is axis 0, any trailing axes are batches):

    lower[i] * x[i-1] + diag[i] * x[i] + upper[i] * x[i+1] = rhs[i]

lower[0] and upper[-1] are ignored.
"""

import logging

import numpy as np

from app.core.errors import SingularSystemError

logger = logging.getLogger(__name__)

# Smallest pivot magnitude accepted by the factorization
PIVOT_FLOOR = 1e-14


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


def _column(coeff: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Reshape coefficients so they broadcast against x along trailing axes."""
    return coeff.reshape(coeff.shape + (1,) * (x.ndim - coeff.ndim))


class BandedOperator:
    """Tridiagonal operator acting along axis 0.

    Args:
        lower: sub-diagonal, shape (n,) or (n, *batch)
        diag: diagonal, same shape as lower
        upper: super-diagonal, same shape as lower
    """

    def __init__(self, lower, diag, upper):
        self.lower = _frozen(lower)
        self.diag = _frozen(diag)
        self.upper = _frozen(upper)
        if not (self.lower.shape == self.diag.shape == self.upper.shape):
            raise ValueError("band arrays must share a shape")

    @property
    def size(self) -> int:
        return self.diag.shape[0]

    def apply(self, x: np.ndarray) -> np.ndarray:
        lower = _column(self.lower, x)
        upper = _column(self.upper, x)
        out = _column(self.diag, x) * x
        out[1:] += lower[1:] * x[:-1]
        out[:-1] += upper[:-1] * x[1:]
        return out

    def shifted(self, alpha: float) -> "BandedOperator":
        """The operator I - alpha * A."""
        return BandedOperator(-alpha * self.lower, 1.0 - alpha * self.diag, -alpha * self.upper)

    def batched(self, shifts) -> "BandedOperator":
        """Stack A + s I for every s in shifts, with the batch on axis 1."""
        if self.diag.ndim != 1:
            raise ValueError("batched() expects an unbatched operator")
        shifts = np.asarray(shifts, dtype=float)
        count = shifts.shape[0]
        return BandedOperator(
            np.repeat(self.lower[:, None], count, axis=1),
            self.diag[:, None] + shifts[None, :],
            np.repeat(self.upper[:, None], count, axis=1),
        )

    def factorize(self) -> "TridiagonalFactorization":
        return TridiagonalFactorization(self.lower, self.diag, self.upper)

    def dense(self) -> np.ndarray:
        """Dense matrix of an unbatched operator (for small checks)."""
        if self.diag.ndim != 1:
            raise ValueError("dense() is only defined for unbatched operators")
        return np.diag(self.diag) + np.diag(self.lower[1:], -1) + np.diag(self.upper[:-1], 1)


class TridiagonalFactorization:
    """Thomas-algorithm factorization, computed once and reused per solve.

    The forward-elimination coefficients are stored so each solve costs
    two sweeps. Pivots are checked at construction.
    """

    def __init__(self, lower, diag, upper):
        lower = np.asarray(lower, dtype=float)
        diag = np.asarray(diag, dtype=float)
        upper = np.asarray(upper, dtype=float)
        n = diag.shape[0]
        denom = np.empty_like(diag)
        cprime = np.empty_like(diag)

        denom[0] = diag[0]
        self._check_pivot(denom[0], 0)
        cprime[0] = upper[0] / denom[0]
        for i in range(1, n):
            denom[i] = diag[i] - lower[i] * cprime[i - 1]
            self._check_pivot(denom[i], i)
            cprime[i] = upper[i] / denom[i]

        self.size = n
        self.lower = _frozen(lower)
        self.cprime = _frozen(cprime)
        self.inv_denom = _frozen(1.0 / denom)
        self.min_pivot = float(np.min(np.abs(denom)))

    @staticmethod
    def _check_pivot(pivot, row: int) -> None:
        magnitude = np.abs(pivot)
        if np.any(magnitude <= PIVOT_FLOOR) or not np.all(np.isfinite(magnitude)):
            flat = np.atleast_1d(magnitude).ravel()
            index = int(np.argmin(np.where(np.isfinite(flat), flat, -1.0)))
            logger.error(f"Singular tridiagonal system: batch {index}, row {row}, pivot {flat[index]:.3e}")
            raise SingularSystemError(index, float(flat[index]))

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve along axis 0; rhs trailing axes broadcast against the batch shape."""
        rhs = np.asarray(rhs)
        lower = _column(self.lower, rhs)
        cprime = _column(self.cprime, rhs)
        inv = _column(self.inv_denom, rhs)
        shape = np.broadcast_shapes(rhs.shape, inv.shape)
        y = np.empty(shape, dtype=np.result_type(rhs, float))
        y[0] = rhs[0] * inv[0]
        for i in range(1, self.size):
            y[i] = (rhs[i] - lower[i] * y[i - 1]) * inv[i]
        for i in range(self.size - 2, -1, -1):
            y[i] -= cprime[i] * y[i + 1]
        return y
