"""Discrete-time linear network model, data release map and perturbations.

The model is

    x(k+1) = A x(k) + B u(k)
    y(k)   = G x(k) + H u(k)

where ``y`` is the vector released to an external requester.  When the
release is an aggregation of finer per-agent signals, ``y = Pi y_raw`` with
``y_raw = G_raw x + H_raw u``, captured by :class:`ReleaseMap` so that
``G = Pi @ G_raw`` and ``H = Pi @ H_raw``.

Two objects drive everything else in the package:

* the system pencil ``D(z) = [[z I - A, -B], [G, H]]`` whose right kernel
  characterizes input/state trajectories that are invisible in the release;
* the perturbation matrix ``K`` applied through the fixed channel map
  ``F = [[-B, 0], [H, Pi]]`` so that the perturbed pencil is exactly
  ``D(z) + F @ K``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError
from .linalg import as_matrix

__all__ = [
    "LinearSystem",
    "ReleaseMap",
    "Perturbation",
    "Trajectory",
    "pencil",
    "f_matrix",
    "apply_perturbation",
    "simulate",
    "exogenous_design_view",
    "embed_design_perturbation",
]


@dataclass(frozen=True, eq=False)
class LinearSystem:
    """State-space data ``(A, B, G, H)`` with an optional input partition.

    Parameters
    ----------
    A : (n, n) array_like
    B : (n, p) array_like
    G : (q, n) array_like
        Released-output map from states.
    H : (q, p) array_like
        Released-output map from inputs.
    control_inputs : tuple of int, optional
        Indices (0-based) of inputs driven by a controller rather than by
        private exogenous data.  The complement is the exogenous set.
    """

    A: np.ndarray
    B: np.ndarray
    G: np.ndarray
    H: np.ndarray
    control_inputs: tuple = None

    def __post_init__(self):
        object.__setattr__(self, "A", as_matrix(self.A, "A"))
        object.__setattr__(self, "B", as_matrix(self.B, "B"))
        object.__setattr__(self, "G", as_matrix(self.G, "G"))
        object.__setattr__(self, "H", as_matrix(self.H, "H"))
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise DimensionError(f"A must be square, got {self.A.shape}")
        if self.B.shape[0] != n:
            raise DimensionError(f"B has {self.B.shape[0]} rows, expected {n}")
        if self.G.shape[1] != n:
            raise DimensionError(f"G has {self.G.shape[1]} cols, expected {n}")
        if self.H.shape != (self.G.shape[0], self.B.shape[1]):
            raise DimensionError(
                f"H must be {(self.G.shape[0], self.B.shape[1])}, got {self.H.shape}"
            )
        if self.n == 0 or self.p == 0 or self.q == 0:
            raise DimensionError("system dimensions must all be positive")
        if self.control_inputs is not None:
            idx = tuple(int(i) for i in self.control_inputs)
            if len(set(idx)) != len(idx):
                raise DimensionError("control_inputs contains duplicates")
            if any(i < 0 or i >= self.p for i in idx):
                raise DimensionError("control_inputs index out of range")
            if len(idx) == self.p:
                raise DimensionError("at least one input must remain exogenous")
            object.__setattr__(self, "control_inputs", tuple(sorted(idx)))

    @property
    def n(self):
        """State dimension."""
        return self.A.shape[0]

    @property
    def p(self):
        """Input dimension."""
        return self.B.shape[1]

    @property
    def q(self):
        """Released-output dimension."""
        return self.G.shape[0]

    @property
    def exogenous_inputs(self):
        """Indices of inputs carrying private exogenous data."""
        if self.control_inputs is None:
            return tuple(range(self.p))
        ctrl = set(self.control_inputs)
        return tuple(i for i in range(self.p) if i not in ctrl)


@dataclass(frozen=True, eq=False)
class ReleaseMap:
    """Aggregation ``y = Pi @ y_raw`` from l raw signals to q released ones.

    Attributes
    ----------
    pi : (q, l) ndarray
    g_raw : (l, n) ndarray
    h_raw : (l, p) ndarray
    """

    pi: np.ndarray
    g_raw: np.ndarray
    h_raw: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "pi", as_matrix(self.pi, "pi"))
        object.__setattr__(self, "g_raw", as_matrix(self.g_raw, "g_raw"))
        object.__setattr__(self, "h_raw", as_matrix(self.h_raw, "h_raw"))
        l = self.pi.shape[1]
        if self.g_raw.shape[0] != l or self.h_raw.shape[0] != l:
            raise DimensionError(
                f"g_raw/h_raw must have {l} rows to match pi columns"
            )

    @property
    def q(self):
        return self.pi.shape[0]

    @property
    def l(self):
        return self.pi.shape[1]

    @classmethod
    def identity(cls, sys):
        """Trivial release: every raw signal is released unaggregated."""
        return cls(np.eye(sys.q), sys.G.copy(), sys.H.copy())

    def check_consistent(self, sys, rtol=1e-12):
        """Verify ``Pi @ g_raw == G`` and ``Pi @ h_raw == H`` for ``sys``."""
        scale = 1.0 + max(np.abs(sys.G).max(), np.abs(sys.H).max())
        if self.g_raw.shape[1] != sys.n or self.h_raw.shape[1] != sys.p:
            raise DimensionError("release map column counts do not match system")
        if self.q != sys.q:
            raise DimensionError(
                f"release map has {self.q} released rows, system has {sys.q}"
            )
        err_g = np.abs(self.pi @ self.g_raw - sys.G).max()
        err_h = np.abs(self.pi @ self.h_raw - sys.H).max()
        if err_g > rtol * scale or err_h > rtol * scale:
            raise DimensionError(
                f"release map inconsistent with system: |Pi@g_raw - G|={err_g:.3e}, "
                f"|Pi@h_raw - H|={err_h:.3e}"
            )


def _release_pi(sys, rel):
    """Effective (Pi, l) for a system with an optional release map."""
    if rel is None:
        return np.eye(sys.q), sys.q
    rel.check_consistent(sys)
    return rel.pi, rel.l


@dataclass(frozen=True, eq=False)
class Perturbation:
    """Block perturbation ``K = [[K_ss, K_si], [K_os, K_oi]]``.

    Row blocks act on the input channel (p rows) and the raw-output channel
    (l rows); column blocks multiply the state (n cols) and the input
    (p cols):

    * ``k_ss`` (p, n): state-feedback part of the input perturbation,
    * ``k_si`` (p, p): input-feedthrough part of the input perturbation,
    * ``k_os`` (l, n): state part of the output perturbation,
    * ``k_oi`` (l, p): input part of the output perturbation.
    """

    k_ss: np.ndarray
    k_si: np.ndarray
    k_os: np.ndarray
    k_oi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "k_ss", as_matrix(self.k_ss, "k_ss"))
        object.__setattr__(self, "k_si", as_matrix(self.k_si, "k_si"))
        object.__setattr__(self, "k_os", as_matrix(self.k_os, "k_os"))
        object.__setattr__(self, "k_oi", as_matrix(self.k_oi, "k_oi"))
        p, n = self.k_ss.shape
        l = self.k_os.shape[0]
        if self.k_si.shape != (p, p):
            raise DimensionError(f"k_si must be {(p, p)}, got {self.k_si.shape}")
        if self.k_os.shape[1] != n:
            raise DimensionError(f"k_os must have {n} cols, got {self.k_os.shape}")
        if self.k_oi.shape != (l, p):
            raise DimensionError(f"k_oi must be {(l, p)}, got {self.k_oi.shape}")

    @property
    def n(self):
        return self.k_ss.shape[1]

    @property
    def p(self):
        return self.k_ss.shape[0]

    @property
    def l(self):
        return self.k_os.shape[0]

    def assemble(self):
        """Stack the blocks into the full (p + l, n + p) matrix."""
        return np.block([[self.k_ss, self.k_si], [self.k_os, self.k_oi]])

    @classmethod
    def from_matrix(cls, K, n, p):
        """Split a full (p + l, n + p) matrix into blocks."""
        K = as_matrix(K, "K")
        if K.shape[1] != n + p or K.shape[0] < p:
            raise DimensionError(
                f"K must be (p+l, n+p) with n={n}, p={p}; got {K.shape}"
            )
        return cls(K[:p, :n], K[:p, n:], K[p:, :n], K[p:, n:])

    @classmethod
    def zero(cls, n, p, l):
        return cls(
            np.zeros((p, n)), np.zeros((p, p)), np.zeros((l, n)), np.zeros((l, p))
        )

    def l0_count(self, threshold=0.0):
        """Number of entries with magnitude strictly above ``threshold``."""
        return int(np.count_nonzero(np.abs(self.assemble()) > threshold))


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Sampled trajectory with aligned state, input and output sequences."""

    states: np.ndarray   # (horizon + 1, n)
    inputs: np.ndarray   # (horizon + 1, p)
    outputs: np.ndarray  # (horizon + 1, q)

    @property
    def horizon(self):
        return self.states.shape[0] - 1


def pencil(sys, z):
    """System pencil ``D(z) = [[z I - A, -B], [G, H]]`` of shape (n+q, n+p)."""
    n = sys.n
    top = np.hstack([z * np.eye(n) - sys.A, -sys.B])
    bottom = np.hstack([sys.G, sys.H])
    return np.vstack([top, bottom])


def f_matrix(sys, rel=None):
    """Perturbation channel map ``F = [[-B, 0], [H, Pi]]`` of shape (n+q, p+l).

    With no release map, ``Pi`` is the q x q identity.
    """
    pi, l = _release_pi(sys, rel)
    top = np.hstack([-sys.B, np.zeros((sys.n, l))])
    bottom = np.hstack([sys.H, pi])
    return np.vstack([top, bottom])


def apply_perturbation(sys, pert, rel=None):
    """Perturbed system realized by ``K``.

    Returns a new :class:`LinearSystem` with

        A' = A + B @ K_ss
        B' = B @ (I + K_si)
        G' = G + H @ K_ss + Pi @ K_os
        H' = H + H @ K_si + Pi @ K_oi

    so that ``pencil(perturbed, z) == pencil(sys, z) + f_matrix(sys, rel) @ K``
    for every z.
    """
    pi, l = _release_pi(sys, rel)
    if pert.n != sys.n or pert.p != sys.p:
        raise DimensionError(
            f"perturbation sized for (n={pert.n}, p={pert.p}), "
            f"system has (n={sys.n}, p={sys.p})"
        )
    if pert.l != l:
        raise DimensionError(
            f"perturbation has {pert.l} output rows, release map provides {l}"
        )
    eye_p = np.eye(sys.p)
    return LinearSystem(
        A=sys.A + sys.B @ pert.k_ss,
        B=sys.B @ (eye_p + pert.k_si),
        G=sys.G + sys.H @ pert.k_ss + pi @ pert.k_os,
        H=sys.H + sys.H @ pert.k_si + pi @ pert.k_oi,
        control_inputs=sys.control_inputs,
    )


def exogenous_design_view(sys, rel=None):
    """Restriction of the system to its exogenous input columns.

    Perturbations must not touch controller-driven inputs, so designs run
    on the reduced data ``(A, B_e, G, H_e)`` where ``_e`` selects the
    exogenous columns.  Returns ``(design_sys, design_rel)``; they equal
    the inputs (with an identity release filled in) when there is no
    partition.  The reduced system drops the partition marker: all of its
    inputs are exogenous by construction.
    """
    if rel is None:
        rel = ReleaseMap.identity(sys)
    rel.check_consistent(sys)
    if sys.control_inputs is None:
        return sys, rel
    exo = list(sys.exogenous_inputs)
    dsys = LinearSystem(
        A=sys.A.copy(),
        B=sys.B[:, exo],
        G=sys.G.copy(),
        H=sys.H[:, exo],
    )
    drel = ReleaseMap(rel.pi.copy(), rel.g_raw.copy(), rel.h_raw[:, exo])
    return dsys, drel


def embed_design_perturbation(sys, pert_design):
    """Lift a perturbation designed on the exogenous view to full size.

    Rows and columns belonging to controller-driven inputs are zero: the
    design never reroutes the control channel.  With no partition the
    perturbation is returned unchanged.
    """
    if sys.control_inputs is None:
        return pert_design
    exo = list(sys.exogenous_inputs)
    if pert_design.p != len(exo) or pert_design.n != sys.n:
        raise DimensionError(
            f"design perturbation sized ({pert_design.p}, n={pert_design.n}); "
            f"expected ({len(exo)}, n={sys.n})"
        )
    n, p, l = sys.n, sys.p, pert_design.l
    k_ss = np.zeros((p, n))
    k_ss[exo, :] = pert_design.k_ss
    k_si = np.zeros((p, p))
    k_si[np.ix_(exo, exo)] = pert_design.k_si
    k_oi = np.zeros((l, p))
    k_oi[:, exo] = pert_design.k_oi
    return Perturbation(
        k_ss=k_ss, k_si=k_si, k_os=pert_design.k_os.copy(), k_oi=k_oi
    )


def simulate(sys, x0, inputs):
    """Roll the recursion forward over the provided input samples.

    Parameters
    ----------
    sys : LinearSystem
    x0 : (n,) array_like
        Initial state.
    inputs : (horizon + 1, p) array_like
        Input samples u(0) ... u(horizon).

    Returns
    -------
    Trajectory
        States x(0) ... x(horizon) and outputs y(k) = G x(k) + H u(k).
    """
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.size != sys.n:
        raise DimensionError(f"x0 has size {x0.size}, expected {sys.n}")
    U = np.asarray(inputs, dtype=float)
    if U.ndim != 2 or U.shape[1] != sys.p:
        raise DimensionError(f"inputs must be (horizon+1, {sys.p}), got {U.shape}")
    if U.shape[0] < 1:
        raise DimensionError("inputs must contain at least one sample")
    horizon = U.shape[0] - 1
    X = np.empty((horizon + 1, sys.n))
    X[0] = x0
    for k in range(horizon):
        X[k + 1] = sys.A @ X[k] + sys.B @ U[k]
    Y = X @ sys.G.T + U @ sys.H.T
    return Trajectory(states=X, inputs=U.copy(), outputs=Y)
