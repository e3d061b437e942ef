"""Sparse assembly helpers, direct solves and nullspace handling."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SolverError


def coo_matrix(rows, cols, vals, shape) -> sp.csr_matrix:
    """Accumulate duplicate (row, col) entries into a CSR matrix."""
    A = sp.coo_matrix((np.asarray(vals, dtype=float).ravel(),
                       (np.asarray(rows).ravel(), np.asarray(cols).ravel())),
                      shape=shape).tocsr()
    A.sum_duplicates()
    A.eliminate_zeros()
    return A


def solve_direct(A, b, label: str = "system", check: bool = True) -> np.ndarray:
    """Sparse LU solve with a residual check.

    Raises SolverError naming `label` on a singular factorization or a
    residual above 1e-10 * ||b||.
    """
    A = A.tocsc()
    b = np.asarray(b, dtype=float)
    try:
        lu = spla.splu(A)
        x = lu.solve(b)
    except RuntimeError as exc:
        raise SolverError(f"direct solve of {label} failed: {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise SolverError(f"direct solve of {label} returned non-finite values")
    if check:
        nb = np.linalg.norm(b)
        res = np.linalg.norm(A @ x - b)
        if res > 1e-10 * max(nb, 1.0):
            raise SolverError(
                f"direct solve of {label}: residual {res:.3e} exceeds tolerance "
                f"(||b|| = {nb:.3e})"
            )
    return x


class Factorized:
    """Cached LU factorization for repeated solves with one matrix."""

    def __init__(self, A, label: str = "system"):
        self.label = label
        self.A = A.tocsc()
        try:
            self._lu = spla.splu(self.A)
        except RuntimeError as exc:
            raise SolverError(f"factorization of {label} failed: {exc}") from exc

    def solve(self, b, check: bool = True) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        x = self._lu.solve(b)
        if not np.all(np.isfinite(x)):
            raise SolverError(f"solve of {self.label} returned non-finite values")
        if check:
            nb = np.linalg.norm(b)
            res = np.linalg.norm(self.A @ x - b)
            if res > 1e-10 * max(nb, 1.0):
                raise SolverError(
                    f"solve of {self.label}: residual {res:.3e} exceeds tolerance"
                )
        return x


def project_mean_zero(weights: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Shift x by a constant so its weighted integral vanishes.

    `weights` are the integrals of the basis functions (so weights @ x is
    the integral of the function and weights.sum() the domain measure).
    """
    x = np.asarray(x, dtype=float)
    return x - (weights @ x) / weights.sum()


def pin_dof(A, dof: int) -> sp.csr_matrix:
    """Replace one row/column by the identity to fix a nullspace constant.

    Valid when the dropped row is implied by the others and the right-hand
    side is compatible; the caller must set rhs[dof] = 0 (making the pinned
    value the gauge).
    """
    A = A.tocsr(copy=True)
    A.data[A.indptr[dof]:A.indptr[dof + 1]] = 0.0
    A.data[A.indices == dof] = 0.0
    A = A + sp.coo_matrix(([1.0], ([dof], [dof])), shape=A.shape)
    return A.tocsr()
