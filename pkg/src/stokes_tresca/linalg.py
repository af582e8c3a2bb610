"""Sparse symmetric storage and a Jacobi-preconditioned conjugate gradient."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ConvergenceError


def as_csr(A):
    """Canonical CSR copy: sorted, duplicate-free column indices."""
    A = sp.csr_array(A, dtype=float)
    A.sum_duplicates()
    A.sort_indices()
    return A


def symmetry_defect(A):
    """Max-norm of ``A - A^T``."""
    D = A - A.T
    return float(abs(D).max()) if D.nnz else 0.0


def spmv(A, x):
    x = np.asarray(x, dtype=float)
    if A.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: matrix is {A.shape}, vector has {x.shape[0]} entries")
    return A @ x


@dataclass
class CGResult:
    x: np.ndarray
    iterations: int
    residual: float
    residual_history: list = field(default_factory=list)


def cg_solve(A, b, tol=1e-10, maxit=None, x0=None, diag=None, callback=None):
    """Solve ``A x = b`` for SPD ``A`` by Jacobi-preconditioned CG.

    Stops once ``||b - A x|| <= tol * ||b||``. Raises
    :class:`ConvergenceError` (carrying the last residual) when ``maxit``
    iterations (default ``10 n``) are not enough. ``callback(x)`` is
    called after every iteration.
    """
    if not 0 < tol < 1:
        raise ValueError(f"tol must lie in (0, 1), got {tol}")
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    if A.shape != (n, n):
        raise ValueError(f"dimension mismatch: matrix is {A.shape}, rhs has {n} entries")
    maxit = 10 * n if maxit is None else int(maxit)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return CGResult(np.zeros(n), 0, 0.0, [0.0])
    if diag is None:
        diag = A.diagonal()
    if np.any(diag <= 0):
        raise ValueError("Jacobi preconditioner needs a positive diagonal")
    inv_diag = 1.0 / diag

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x if x0 is not None else b.copy()
    target = tol * bnorm
    rnorm = np.linalg.norm(r)
    res_hist = [rnorm]
    if rnorm <= target:
        return CGResult(x, 0, rnorm, res_hist)

    z = inv_diag * r
    p = z.copy()
    rz = r @ z
    for it in range(1, maxit + 1):
        Ap = A @ p
        pAp = p @ Ap
        if pAp <= 0:
            raise ValueError("matrix is not positive definite along a search direction")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        if callback is not None:
            callback(x)
        rnorm = np.linalg.norm(r)
        res_hist.append(rnorm)
        if rnorm <= target:
            return CGResult(x, it, rnorm, res_hist)
        z = inv_diag * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise ConvergenceError(
        f"CG did not converge in {maxit} iterations (residual {rnorm:.3e}, target {target:.3e})",
        residual=rnorm,
    )


def dense_solve(A, b):
    """Dense LU fallback for desk-scale verification."""
    A = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
    return np.linalg.solve(A, np.asarray(b, dtype=float))
