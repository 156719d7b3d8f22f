"""Sparse symmetric positive-definite linear algebra.

Assembly from coordinate triplets into compressed-row storage, the
matrix-vector product, a direct tridiagonal solve for the 1D scheme and
Jacobi-preconditioned conjugate gradients and sparse LU for the 2D
streamfunction problem.
"""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from src.core.logging import EventType, get_logger, log_solver_event

logger = get_logger(__name__)

FloatArray = npt.NDArray[np.float64]

# Relative symmetry tolerance for stored pairs
SYMMETRY_TOL = 1e-12


# ============================================================
# Exceptions
# ============================================================


class LinalgError(Exception):
    """Base class for linear algebra failures."""


class DimensionMismatchError(LinalgError):
    """Raised when operand shapes do not agree."""


class MatrixInvariantError(LinalgError):
    """Raised when an assembled matrix is not square, symmetric or positive on the diagonal."""


class ZeroPivotError(LinalgError):
    """Raised when tridiagonal elimination meets a zero pivot."""


class NonConvergenceError(LinalgError):
    """Raised when CG exhausts its iteration budget.

    The best iterate and the report travel with the exception so callers can
    still inspect them.
    """

    def __init__(self, message: str, x: FloatArray, report: SolveReport) -> None:
        super().__init__(message)
        self.x = x
        self.report = report


# ============================================================
# Types
# ============================================================


@dataclass(frozen=True)
class SolveReport:
    """Outcome of a linear solve."""

    iterations: int
    relative_residual: float
    converged: bool


@dataclass(frozen=True, eq=False)
class SparseSpd:
    """Symmetric positive-definite matrix in compressed-row layout.

    Construct through :meth:`from_triplets`, :meth:`from_tridiagonal` or
    :meth:`from_dense`; each checks the invariants before returning.
    """

    matrix: sp.csr_matrix
    symmetry_checked: bool = field(default=False)

    @classmethod
    def from_triplets(
        cls,
        n: int,
        rows: npt.ArrayLike,
        cols: npt.ArrayLike,
        values: npt.ArrayLike,
    ) -> SparseSpd:
        """Assemble from coordinate triplets, summing duplicates.

        Args:
            n: Matrix dimension.
            rows: Row index of each contribution.
            cols: Column index of each contribution.
            values: Value of each contribution.

        Returns:
            Validated SparseSpd.

        Raises:
            DimensionMismatchError: If the triplet arrays differ in length.
            MatrixInvariantError: If symmetry or diagonal positivity fails.

        Examples:
            >>> A = SparseSpd.from_triplets(2, [0, 1, 0], [0, 1, 0], [1.0, 2.0, 1.0])
            >>> A.diagonal().tolist()
            [2.0, 2.0]
        """
        r = np.asarray(rows, dtype=np.int64)
        c = np.asarray(cols, dtype=np.int64)
        v = np.asarray(values, dtype=np.float64)
        if not (r.shape == c.shape == v.shape):
            raise DimensionMismatchError(
                f"triplet lengths differ: rows={r.shape}, cols={c.shape}, values={v.shape}"
            )
        matrix = sp.coo_matrix((v, (r, c)), shape=(n, n)).tocsr()
        matrix.sum_duplicates()
        matrix.sort_indices()
        cls._check_invariants(matrix)
        return cls(matrix=matrix, symmetry_checked=True)

    @classmethod
    def from_tridiagonal(
        cls, lower: npt.ArrayLike, diag: npt.ArrayLike, upper: npt.ArrayLike
    ) -> SparseSpd:
        """Build from the three bands of a tridiagonal matrix."""
        d = np.asarray(diag, dtype=np.float64)
        lo = np.asarray(lower, dtype=np.float64)
        up = np.asarray(upper, dtype=np.float64)
        n = d.size
        if lo.size != n - 1 or up.size != n - 1:
            raise DimensionMismatchError(f"band lengths {lo.size}, {n}, {up.size} do not fit")
        idx = np.arange(n)
        rows = np.concatenate([idx, idx[1:], idx[:-1]])
        cols = np.concatenate([idx, idx[:-1], idx[1:]])
        return cls.from_triplets(n, rows, cols, np.concatenate([d, lo, up]))

    @classmethod
    def from_dense(cls, dense: npt.ArrayLike) -> SparseSpd:
        """Wrap a small dense SPD block, such as a Schur complement.

        Examples:
            >>> SparseSpd.from_dense([[2.0, 1.0], [1.0, 2.0]]).n
            2
        """
        matrix = sp.csr_matrix(np.asarray(dense, dtype=np.float64))
        cls._check_invariants(matrix)
        return cls(matrix=matrix, symmetry_checked=True)

    @staticmethod
    def _check_invariants(matrix: sp.csr_matrix) -> None:
        n_rows, n_cols = matrix.shape
        if n_rows != n_cols:
            raise MatrixInvariantError(f"matrix is {n_rows}x{n_cols}, expected square")
        scale = float(np.max(np.abs(matrix.data))) if matrix.nnz else 0.0
        asym = matrix - matrix.T
        if asym.nnz and float(np.max(np.abs(asym.data))) > SYMMETRY_TOL * scale:
            raise MatrixInvariantError(
                f"matrix not symmetric: max |a_ij - a_ji| = {np.max(np.abs(asym.data)):.3e}"
            )
        diag = matrix.diagonal()
        if n_rows and not np.all(diag > 0.0):
            bad = int(np.argmin(diag))
            raise MatrixInvariantError(f"diagonal entry {bad} is {diag[bad]:.3e}, must be > 0")

    @property
    def n(self) -> int:
        return int(self.matrix.shape[0])

    @property
    def row_offsets(self) -> npt.NDArray[np.int32]:
        return self.matrix.indptr

    @property
    def col_indices(self) -> npt.NDArray[np.int32]:
        return self.matrix.indices

    @property
    def values(self) -> FloatArray:
        return self.matrix.data

    def matvec(self, x: npt.ArrayLike) -> FloatArray:
        """Return ``A @ x``."""
        v = np.asarray(x, dtype=np.float64)
        if v.shape != (self.n,):
            raise DimensionMismatchError(f"vector of shape {v.shape} for n={self.n}")
        return np.asarray(self.matrix @ v, dtype=np.float64)

    def diagonal(self) -> FloatArray:
        return np.asarray(self.matrix.diagonal(), dtype=np.float64)

    def to_dense(self) -> FloatArray:
        return np.asarray(self.matrix.toarray(), dtype=np.float64)

    def principal(self, keep: npt.ArrayLike) -> SparseSpd:
        """Principal submatrix on the rows and columns selected by ``keep``.

        Raises:
            DimensionMismatchError: If ``keep`` is not a mask of length n.
        """
        mask = np.asarray(keep, dtype=bool)
        if mask.shape != (self.n,):
            raise DimensionMismatchError(f"mask of shape {mask.shape} for n={self.n}")
        block = sp.csr_matrix(self.matrix[mask][:, mask])
        self._check_invariants(block)
        return SparseSpd(matrix=block, symmetry_checked=True)

    def factorize(self) -> Callable[[FloatArray], FloatArray]:
        """Sparse LU factorization.

        The returned solver accepts a vector or a block of right-hand-side
        columns.

        Examples:
            >>> solve = SparseSpd.from_tridiagonal([-1.0], [2.0, 2.0], [-1.0]).factorize()
            >>> solve(np.array([1.0, 0.0])).round(12).tolist()
            [0.666666666667, 0.333333333333]
        """
        lu = spla.splu(sp.csc_matrix(self.matrix))

        def solve(rhs: FloatArray) -> FloatArray:
            b = np.asarray(rhs, dtype=np.float64)
            if b.shape[0] != self.n:
                raise DimensionMismatchError(f"rhs of shape {b.shape} for n={self.n}")
            if b.size == 0:
                return np.zeros(b.shape)
            return np.asarray(lu.solve(b), dtype=np.float64)

        return solve


# ============================================================
# Solvers
# ============================================================


def cg_solve(
    A: SparseSpd,
    b: npt.ArrayLike,
    tol: float = 1e-12,
    max_iter: int | None = None,
    x0: npt.ArrayLike | None = None,
) -> tuple[FloatArray, SolveReport]:
    """Solve ``A x = b`` by Jacobi-preconditioned conjugate gradients.

    Convergence is declared on the true residual ``||b - A x|| / ||b||``; when
    the recursively updated residual drops below ``tol`` but the true one has
    not, the residual is replaced and iteration continues.

    Args:
        A: SPD system matrix.
        b: Right-hand side.
        tol: Relative residual tolerance in (0, 1).
        max_iter: Iteration budget, ``10 * n`` when omitted.
        x0: Optional starting guess.

    Returns:
        Tuple of solution and SolveReport.

    Raises:
        DimensionMismatchError: If ``b`` or ``x0`` does not match ``A``.
        NonConvergenceError: If the budget is exhausted.
        ValueError: If ``tol`` is outside (0, 1) or ``b`` is not finite.

    Examples:
        >>> A = SparseSpd.from_triplets(3, [0, 1, 2], [0, 1, 2], [1.0, 1.0, 1.0])
        >>> x, report = cg_solve(A, [1.0, 2.0, 3.0])
        >>> x.tolist(), report.iterations
        ([1.0, 2.0, 3.0], 1)
    """
    rhs = np.asarray(b, dtype=np.float64)
    n = A.n
    if rhs.shape != (n,):
        raise DimensionMismatchError(f"rhs of shape {rhs.shape} for n={n}")
    if not 0.0 < tol < 1.0:
        raise ValueError(f"tol must lie in (0, 1), got {tol}")
    if not np.all(np.isfinite(rhs)):
        raise ValueError("rhs contains non-finite values")
    budget = 10 * n if max_iter is None else max_iter

    b_norm = float(np.linalg.norm(rhs))
    if b_norm == 0.0:
        return np.zeros(n), SolveReport(iterations=0, relative_residual=0.0, converged=True)

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64)
    if x.shape != (n,):
        raise DimensionMismatchError(f"x0 of shape {x.shape} for n={n}")

    inv_diag = 1.0 / A.diagonal()
    r = rhs - A.matvec(x)
    z = inv_diag * r
    p = z.copy()
    rz = float(r @ z)
    rel = float(np.linalg.norm(r)) / b_norm
    iterations = 0

    while rel > tol and iterations < budget:
        Ap = A.matvec(p)
        alpha = rz / float(p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        iterations += 1

        rel = float(np.linalg.norm(r)) / b_norm
        if rel <= tol:
            # Residual replacement guards against drift of the recursion
            r = rhs - A.matvec(x)
            rel = float(np.linalg.norm(r)) / b_norm
            if rel <= tol:
                break

        z = inv_diag * r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new

    report = SolveReport(iterations=iterations, relative_residual=rel, converged=rel <= tol)
    if not report.converged:
        log_solver_event(
            EventType.SOLVER_NOT_CONVERGED,
            n=n,
            iterations=iterations,
            relative_residual=rel,
            tol=tol,
        )
        raise NonConvergenceError(
            f"CG did not reach tol={tol:.1e} in {budget} iterations (residual {rel:.3e})",
            x=x,
            report=report,
        )

    logger.debug("cg_converged", n=n, iterations=iterations, relative_residual=rel)
    return x, report


def thomas_solve(
    lower: npt.ArrayLike,
    diag: npt.ArrayLike,
    upper: npt.ArrayLike,
    b: npt.ArrayLike,
) -> FloatArray:
    """Solve a tridiagonal system by forward elimination and back substitution.

    Args:
        lower: Sub-diagonal, length n-1.
        diag: Main diagonal, length n.
        upper: Super-diagonal, length n-1.
        b: Right-hand side, length n.

    Returns:
        Solution vector.

    Raises:
        DimensionMismatchError: If band lengths are inconsistent.
        ZeroPivotError: If a pivot vanishes during elimination.

    Examples:
        >>> thomas_solve([-1.0], [2.0, 2.0], [-1.0], [1.0, 0.0]).round(12).tolist()
        [0.666666666667, 0.333333333333]
    """
    a = np.asarray(lower, dtype=np.float64)
    d = np.asarray(diag, dtype=np.float64)
    c = np.asarray(upper, dtype=np.float64)
    rhs = np.asarray(b, dtype=np.float64)
    n = d.size
    if rhs.size != n or a.size != n - 1 or c.size != n - 1:
        raise DimensionMismatchError(
            f"bands ({a.size}, {n}, {c.size}) and rhs {rhs.size} do not fit"
        )

    gamma = np.zeros(max(n - 1, 0))
    rho = np.zeros(n)

    pivot = d[0]
    if pivot == 0.0:
        raise ZeroPivotError("zero pivot at row 0")
    if n > 1:
        gamma[0] = c[0] / pivot
    rho[0] = rhs[0] / pivot
    for i in range(1, n):
        pivot = d[i] - a[i - 1] * gamma[i - 1]
        if pivot == 0.0:
            raise ZeroPivotError(f"zero pivot at row {i}")
        if i < n - 1:
            gamma[i] = c[i] / pivot
        rho[i] = (rhs[i] - a[i - 1] * rho[i - 1]) / pivot

    x = np.empty(n)
    x[-1] = rho[-1]
    for i in range(n - 2, -1, -1):
        x[i] = rho[i] - gamma[i] * x[i + 1]
    return x
