"""Controllability checks for perturbed input matrices.

An input perturbation reshapes the pair ``(A, B)`` into
``(A + B K_ss, B (I + K_si))``.  State feedback never destroys
controllability, but the input mixing ``I + K_si`` can.  This module
provides the rank tests plus two perturbation-specific results:

* an eigenvector-level check of whether a given ``(K_ss, K_si)`` keeps the
  pair controllable (necessary and sufficient), and
* a cheap sufficient certificate: ``K_si`` symmetric with
  ``(1 - eps) I + K_si`` positive semidefinite keeps ``I + K_si``
  invertible, hence controllability survives for any ``K_ss``.

The degenerate corner ``K_si = -I`` zeroes the perturbed input matrix and
with it the whole controllability matrix, which is why the design problems
constrain ``K_si`` away from that region.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .linalg import DEFAULT_TOL, as_matrix, rank

__all__ = [
    "ControllabilityVerdict",
    "controllability_matrix",
    "is_controllable",
    "perturbed_pair_controllable",
    "symmetric_psd_certificate",
]


@dataclass(frozen=True)
class ControllabilityVerdict:
    """Outcome of a controllability test."""

    controllable: bool
    rank: int
    gram_det: float
    method: str

    def to_doc(self):
        return {
            "controllable": self.controllable,
            "rank": self.rank,
            "gram_det": self.gram_det,
            "method": self.method,
        }


def controllability_matrix(A, B):
    """Reachability matrix ``[B, AB, ..., A^(n-1) B]`` of shape (n, n*p)."""
    A = as_matrix(A, "A")
    B = as_matrix(B, "B")
    n = A.shape[0]
    if A.shape != (n, n) or B.shape[0] != n:
        raise DimensionError(f"incompatible shapes A{A.shape}, B{B.shape}")
    blocks = [B]
    for _ in range(n - 1):
        blocks.append(A @ blocks[-1])
    return np.hstack(blocks)


def _rank_complex(M, tol):
    s = np.linalg.svd(M, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > tol.rank_tol * s[0]))


def is_controllable(A, B, tol=DEFAULT_TOL, method="kalman"):
    """Rank test for controllability of ``(A, B)``.

    Parameters
    ----------
    method : {"kalman", "pbh"}
        ``kalman`` ranks the reachability matrix; ``pbh`` ranks
        ``[A - lam I, B]`` at every eigenvalue of ``A`` (complex pairs
        included, one representative per conjugate pair).
    """
    A = as_matrix(A, "A")
    B = as_matrix(B, "B")
    n = A.shape[0]
    C = controllability_matrix(A, B)
    gram_det = float(np.linalg.det(C @ C.T))
    if method == "kalman":
        r = rank(C, tol)
        return ControllabilityVerdict(r == n, r, gram_det, "kalman")
    if method == "pbh":
        min_rank = n
        for lam in np.linalg.eigvals(A):
            M = np.hstack([A - lam * np.eye(n), B.astype(complex)])
            min_rank = min(min_rank, _rank_complex(M, tol))
            if min_rank < n:
                break
        return ControllabilityVerdict(min_rank == n, min_rank, gram_det, "pbh")
    raise ValueError(f"unknown method {method!r}")


def perturbed_pair_controllable(A, B, k_ss, k_si, tol=DEFAULT_TOL):
    """Exact controllability condition for the perturbed pair.

    ``(A + B K_ss, B (I + K_si))`` is controllable iff no left eigenvector
    v of the perturbed state matrix satisfies ``v B (I + K_si) = 0``.  For
    repeated eigenvalues the whole eigenspace is checked at once: with W a
    basis of the left eigenspace, the condition is that ``W^T B (I + K_si)``
    keeps full row rank.

    Returns
    -------
    bool
    """
    A = as_matrix(A, "A")
    B = as_matrix(B, "B")
    k_ss = as_matrix(k_ss, "k_ss")
    k_si = as_matrix(k_si, "k_si")
    n, p = B.shape
    if k_ss.shape != (p, n) or k_si.shape != (p, p):
        raise DimensionError("k_ss must be (p, n) and k_si (p, p)")
    A_hat = A + B @ k_ss
    B_hat = B @ (np.eye(p) + k_si)
    # left eigenvectors of A_hat are right eigenvectors of A_hat^T (no conjugate)
    AT = A_hat.T.astype(complex)
    eigvals = np.linalg.eigvals(AT)
    remaining = list(eigvals)
    while remaining:
        lam = remaining.pop(0)
        # merge the cluster of this eigenvalue (repeated roots)
        cluster_tol = 1e-7 * (1.0 + abs(lam))
        remaining = [mu for mu in remaining if abs(mu - lam) > cluster_tol]
        # geometric eigenspace of A_hat^T at lam
        M = AT - lam * np.eye(n)
        _, s, Vh = np.linalg.svd(M)
        r = int(np.count_nonzero(s > tol.rank_tol * s[0])) if s[0] > 0 else 0
        W = Vh[r:].conj().T  # (n, g) basis of the kernel
        g = W.shape[1]
        if g == 0:
            continue  # numerically empty eigenspace; nothing to violate
        if _rank_complex(W.T @ B_hat.astype(complex), tol) < g:
            return False
    return True


def symmetric_psd_certificate(k_si, eps, tol=DEFAULT_TOL, slack=None):
    """Sufficient certificate that ``I + K_si`` stays invertible.

    Checks that ``k_si`` is symmetric (within tolerance) and that the
    smallest eigenvalue of ``(1 - eps) I + K_si`` is nonnegative, which
    bounds ``I + K_si`` from below by ``eps I``.

    Parameters
    ----------
    eps : float
        Positive margin.  Values below one allow mildly negative
        eigenvalues of ``K_si``; values of one or more force ``K_si``
        itself to be positive semidefinite (shifted), which is a stricter
        regime but the invertibility conclusion is unchanged.
    slack : float, optional
        Allowed dip of the smallest eigenvalue below zero, for callers
        whose ``k_si`` went through a solver or thresholding pipeline.
        Must stay below ``eps`` or the certificate would no longer imply
        invertibility; defaults to ``tol.zero_tol``.

    Returns
    -------
    certified : bool
    min_eig : float
        Smallest eigenvalue of ``(1 - eps) I + sym(K_si)``.
    """
    k_si = as_matrix(k_si, "k_si")
    p = k_si.shape[0]
    if k_si.shape != (p, p):
        raise DimensionError(f"k_si must be square, got {k_si.shape}")
    if not eps > 0.0:
        raise ValueError(f"eps must be positive, got {eps}")
    if slack is None:
        slack = tol.zero_tol
    if not 0.0 <= slack < eps:
        raise ValueError(f"slack must be in [0, eps), got {slack}")
    asym = np.abs(k_si - k_si.T).max()
    symmetric = asym <= tol.zero_tol * (1.0 + np.abs(k_si).max())
    sym_part = 0.5 * (k_si + k_si.T)
    min_eig = float(np.linalg.eigvalsh((1.0 - eps) * np.eye(p) + sym_part).min())
    certified = symmetric and min_eig >= -slack
    return certified, min_eig
