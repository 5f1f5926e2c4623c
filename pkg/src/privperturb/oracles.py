"""Small exhaustive oracles used to validate the scalable designs.

These routines trade generality for certainty: they enumerate rather than
optimize, so they are only usable on small instances, but their answers are
ground truth for the test suite.

* ``sparsest_null_vector`` finds a kernel vector of minimum support by
  exhaustive column-subset search (exponential; hard-capped at 16 columns).
* ``support_diagonal_design`` turns that vector into a diagonal output
  perturbation with -1 on the support, and
  ``support_diagonal_matches_sparsest`` confirms the construction both
  creates the rank deficiency and spends exactly one nonzero entry per
  support coordinate.
* ``grid_min_frobenius`` brute-forces the frequency that minimizes the
  pencil's Frobenius norm, validating the closed-form choice used by the
  designs.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import DimensionError, SizeLimitError
from .linalg import DEFAULT_TOL, as_matrix, null_space, rank
from .system import pencil

__all__ = [
    "NvpResult",
    "sparsest_null_vector",
    "support_diagonal_design",
    "support_diagonal_matches_sparsest",
    "grid_min_frobenius",
]

MAX_COLUMNS = 16


@dataclass(frozen=True, eq=False)
class NvpResult:
    """Sparsest-kernel-vector search outcome."""

    v_star: np.ndarray
    sparsity: int
    subsets_examined: int


def sparsest_null_vector(M, tol=DEFAULT_TOL):
    """Kernel vector of ``M`` with the fewest nonzero entries.

    Enumerates column subsets by increasing size (lexicographic within a
    size); the first subset whose columns are linearly dependent carries the
    sparsest kernel vector.  Requires fewer rows than columns so a kernel
    exists, and at most ``MAX_COLUMNS`` columns.

    Returns
    -------
    NvpResult
        ``v_star`` is unit norm with its largest entry positive;
        ``subsets_examined`` counts every dependence test performed.
    """
    M = as_matrix(M)
    r, c = M.shape
    if c > MAX_COLUMNS:
        raise SizeLimitError(
            f"exhaustive search is capped at {MAX_COLUMNS} columns, got {c}"
        )
    if r >= c:
        raise DimensionError(
            f"need fewer rows than columns for a guaranteed kernel, got {M.shape}"
        )
    examined = 0
    for size in range(1, c + 1):
        for subset in combinations(range(c), size):
            examined += 1
            sub = M[:, subset]
            if rank(sub, tol) < size:
                kernel = null_space(sub, tol)
                w = kernel[:, 0]
                v = np.zeros(c)
                v[list(subset)] = w
                v /= np.linalg.norm(v)
                if v[np.argmax(np.abs(v))] < 0:
                    v = -v
                return NvpResult(v_star=v, sparsity=size,
                                 subsets_examined=examined)
    raise AssertionError("unreachable: a wide matrix always has a kernel")


def support_diagonal_design(v_star, tol=DEFAULT_TOL):
    """Diagonal matrix with -1 on the support of ``v_star``, 0 elsewhere.

    Adding this to an identity feedthrough zeroes exactly the columns on
    the support, which is the cheapest way to hide the corresponding
    entries behind the kernel vector.
    """
    v = np.asarray(v_star, dtype=float).reshape(-1)
    nv = np.linalg.norm(v)
    if nv == 0.0:
        raise ValueError("v_star must be nonzero")
    d = np.where(np.abs(v) > tol.zero_tol * nv, -1.0, 0.0)
    return np.diag(d)


def support_diagonal_matches_sparsest(M, tol=DEFAULT_TOL):
    """Does the diagonal design spend exactly the minimum nonzero budget?

    Checks two facts on one instance: stacking ``M`` on top of
    ``I + support_diagonal_design`` drops column rank (the hidden direction
    exists), and the number of -1 entries equals the sparsity of the
    sparsest kernel vector.
    """
    M = as_matrix(M)
    res = sparsest_null_vector(M, tol)
    Kd = support_diagonal_design(res.v_star, tol)
    c = M.shape[1]
    stacked = np.vstack([M, np.eye(c) + Kd])
    rank_deficient = rank(stacked, tol) < c
    budget_match = int(np.count_nonzero(np.diag(Kd))) == res.sparsity
    return bool(rank_deficient and budget_match)


def grid_min_frobenius(sys, z_lo, z_hi, step):
    """Frequency in ``[z_lo, z_hi]`` minimizing ``||D(z)||_F`` on a grid.

    Purely numerical: evaluates the pencil at every grid point.  Used as an
    independent check of the closed-form optimal frequency.
    """
    if not (z_hi > z_lo) or step <= 0:
        raise ValueError("need z_hi > z_lo and step > 0")
    grid = np.arange(z_lo, z_hi + 0.5 * step, step)
    norms = np.empty(grid.size)
    for i, z in enumerate(grid):
        norms[i] = np.linalg.norm(pencil(sys, float(z)), "fro")
    return float(grid[int(np.argmin(norms))])
