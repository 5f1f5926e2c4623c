"""Dense linear-algebra kernels with a single numerical-rank convention.

Every rank, kernel and pseudoinverse decision in this package goes through
this module so the cutoff rule is identical everywhere: a singular value
counts as nonzero when it exceeds ``tol.rank_tol`` times the largest
singular value.  All kernels operate on dense real matrices; complex values
appear only as generalized-eigenvalue outputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DimensionError, SvdConvergenceError

__all__ = [
    "Tolerance",
    "DEFAULT_TOL",
    "as_matrix",
    "svd",
    "singular_values",
    "rank",
    "anchored_rank",
    "null_space",
    "pinv",
    "finite_generalized_eigenvalues",
]


@dataclass(frozen=True)
class Tolerance:
    """Numeric tolerances shared by rank tests and zero tests.

    Parameters
    ----------
    rank_tol : float
        Relative cutoff for counting singular values, default 1e-8.
    zero_tol : float
        Cutoff for treating a scalar or vector entry as zero, default 1e-9.
    """

    rank_tol: float = 1e-8
    zero_tol: float = 1e-9

    def __post_init__(self):
        if not (0.0 < self.rank_tol < 1.0):
            raise ValueError(f"rank_tol must be in (0, 1), got {self.rank_tol}")
        if not (0.0 < self.zero_tol < 1.0):
            raise ValueError(f"zero_tol must be in (0, 1), got {self.zero_tol}")


DEFAULT_TOL = Tolerance()


def as_matrix(M, name="M"):
    """Validate and convert input to a dense 2-D float64 array.

    Raises
    ------
    DimensionError
        If the input is not 2-D or contains non-finite entries.
    """
    arr = np.asarray(M, dtype=float)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got ndim={arr.ndim}")
    if arr.size and not np.all(np.isfinite(arr)):
        raise DimensionError(f"{name} contains non-finite entries")
    return arr


def svd(M):
    """Full singular value decomposition ``M = U @ diag(s) @ Vt``.

    Tries the divide-and-conquer LAPACK driver first and falls back to the
    slower Jacobi-free driver on non-convergence.

    Returns
    -------
    U : (m, m) ndarray
    s : (min(m, n),) ndarray, non-increasing
    Vt : (n, n) ndarray
    """
    M = as_matrix(M)
    try:
        return np.linalg.svd(M, full_matrices=True)
    except np.linalg.LinAlgError:
        pass
    try:
        return scipy.linalg.svd(M, full_matrices=True, lapack_driver="gesvd")
    except scipy.linalg.LinAlgError as exc:  # pragma: no cover - hardware rare
        raise SvdConvergenceError(
            f"SVD failed to converge on both gesdd and gesvd drivers "
            f"for a {M.shape[0]}x{M.shape[1]} matrix"
        ) from exc


def singular_values(M):
    """Singular values of ``M`` in non-increasing order."""
    M = as_matrix(M)
    if 0 in M.shape:
        return np.zeros(0)
    return np.linalg.svd(M, compute_uv=False)


def anchored_rank(M, anchor, tol=DEFAULT_TOL, floor=0.0):
    """Rank with the cutoff taken relative to an external scale.

    Counts singular values above ``max(rank_tol * max(anchor, s[0]),
    floor)``.  Use when ``M`` is a residual of a cancellation: a matrix
    that collapsed to numerical zero reports rank 0 instead of counting
    its own noise.  ``floor`` is an absolute cutoff for callers whose
    matrix went through a solver that only resolves values down to a
    known level.
    """
    s = singular_values(M)
    if s.size == 0:
        return 0
    cutoff = max(tol.rank_tol * max(float(anchor), float(s[0])),
                 float(floor))
    if cutoff == 0.0:
        return 0
    return int(np.count_nonzero(s > cutoff))


def rank(M, tol=DEFAULT_TOL):
    """Numerical rank: number of singular values above ``rank_tol * s[0]``.

    The zero matrix (and any empty matrix) has rank 0.
    """
    s = singular_values(M)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > tol.rank_tol * s[0]))


def null_space(M, tol=DEFAULT_TOL):
    """Orthonormal basis of the right kernel of ``M``.

    Returns
    -------
    N : (n, n - rank(M)) ndarray
        Columns are orthonormal and satisfy ``M @ N ~ 0``.
    """
    M = as_matrix(M)
    n = M.shape[1]
    if 0 in M.shape:
        return np.eye(n)
    U, s, Vt = svd(M)
    if s.size == 0 or s[0] == 0.0:
        r = 0
    else:
        r = int(np.count_nonzero(s > tol.rank_tol * s[0]))
    return Vt[r:].T.copy()


def pinv(M, tol=DEFAULT_TOL):
    """Moore-Penrose pseudoinverse with the shared rank cutoff."""
    M = as_matrix(M)
    return np.linalg.pinv(M, rcond=tol.rank_tol)


def finite_generalized_eigenvalues(C, E, infinite_tol=1e-12):
    """All finite solutions of ``det(C + lam * E) = 0``.

    Uses the QZ factorization of the pair ``(C, -E)``; pairs whose beta
    component is negligible are classified as infinite and dropped.

    Parameters
    ----------
    C, E : (d, d) array_like
        Square matrices of the same size.
    infinite_tol : float
        An eigenvalue pair (alpha, beta) is infinite when
        ``|beta| <= infinite_tol * (1 + |alpha|)``.

    Returns
    -------
    lam : (k,) complex ndarray
        Finite eigenvalues; empty when ``E`` is zero.
    """
    C = as_matrix(C, "C")
    E = as_matrix(E, "E")
    if C.shape[0] != C.shape[1]:
        raise DimensionError(f"C must be square, got {C.shape}")
    if C.shape != E.shape:
        raise DimensionError(f"C and E shapes differ: {C.shape} vs {E.shape}")
    if C.shape[0] == 0:
        return np.zeros(0, dtype=complex)
    # det(C - lam * (-E)) = det(C + lam * E)
    alpha, beta = scipy.linalg.eig(C, -E, right=False, homogeneous_eigvals=True)
    finite = np.abs(beta) > infinite_tol * (1.0 + np.abs(alpha))
    return (alpha[finite] / beta[finite]).astype(complex)
