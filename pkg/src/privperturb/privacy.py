"""Privacy analysis of a released linear system.

The adversary model: a requester who knows the system matrices and observes
the released output sequence tries to reconstruct initial states and input
sequences.  An entry is *protected* when the system pencil ``D(z)`` has a
right kernel vector, at some real frequency z, that is nonzero in that
entry: the kernel vector spawns a continuum of shadow trajectories with
identical released outputs, so the entry cannot be identified.

Main entry points
-----------------
``check_full_row_rank_everywhere``
    Verifies the pencil keeps full row rank at every complex frequency
    (no invariant zeros), the standing requirement for the designs.
``protected_entries``
    Flags which requested initial-state / input entries are protected by
    the kernel of the pencil at a given frequency.
``min_protected_count``
    Dimension count of guaranteed-indistinguishable entries.
``output_invariance_witness_test``
    Simulation probe confirming a kernel vector really leaves the released
    outputs unchanged.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import AssumptionViolationError, DimensionError
from .linalg import DEFAULT_TOL, finite_generalized_eigenvalues, null_space, rank
from .system import (
    apply_perturbation,
    exogenous_design_view,
    pencil,
    simulate,
)

__all__ = [
    "TargetSpec",
    "AssumptionReport",
    "ProtectionReport",
    "check_full_row_rank_everywhere",
    "design_view_targets",
    "view_protected_entries",
    "protected_entries",
    "min_protected_count",
    "output_invariance_witness_test",
]


@dataclass(frozen=True)
class TargetSpec:
    """Entries the data owner wants protected (0-based indices).

    Attributes
    ----------
    state_targets : frozenset of int
        Initial-state entries x0[i].
    input_targets : frozenset of int
        Input-sequence entries u[j] (the whole sequence for channel j).
    """

    state_targets: frozenset = frozenset()
    input_targets: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "state_targets",
                           frozenset(int(i) for i in self.state_targets))
        object.__setattr__(self, "input_targets",
                           frozenset(int(j) for j in self.input_targets))
        if not self.state_targets and not self.input_targets:
            raise ValueError("at least one state or input target is required")
        if any(i < 0 for i in self.state_targets | self.input_targets):
            raise ValueError("target indices must be nonnegative")

    def validate(self, n, p):
        if any(i >= n for i in self.state_targets):
            raise DimensionError(f"state target out of range for n={n}")
        if any(j >= p for j in self.input_targets):
            raise DimensionError(f"input target out of range for p={p}")

    @classmethod
    def all_entries(cls, n, p):
        return cls(frozenset(range(n)), frozenset(range(p)))


def design_view_targets(sys, targets):
    """Re-index full-system targets into the exogenous design view.

    Identifiability of a partitioned system is judged on the pencil with
    the exogenous input columns only: the controller-driven channels are
    known to the requester, so a kernel direction using them certifies
    nothing.  Input targets therefore must name exogenous channels and
    are renumbered to their column position inside the view; state
    targets pass through.  Without a partition the spec is returned
    unchanged.
    """
    if targets is None:
        return None
    targets.validate(sys.n, sys.p)
    if sys.control_inputs is None:
        return targets
    exo = sys.exogenous_inputs
    position = {col: k for k, col in enumerate(exo)}
    mapped = set()
    for j in sorted(targets.input_targets):
        if j not in position:
            raise ValueError(
                f"input target u[{j}] is a controller-driven channel; the "
                "requester already knows it, so it cannot be protected"
            )
        mapped.add(position[j])
    return TargetSpec(targets.state_targets, frozenset(mapped))


def view_protected_entries(sys, targets, z, pert_design=None, rel=None,
                           tol=DEFAULT_TOL, trials=8, seed=0):
    """Protection verdict for full-system targets on the design-view pencil.

    Maps the targets through :func:`design_view_targets`, applies the
    view-sized perturbation (``None`` means unperturbed), certifies on
    the reduced pencil, and relabels the input flags back to full-system
    channel numbers so reports speak the caller's coordinates.  The
    witness vector stays in view coordinates ``(x0, u_exogenous)``.
    """
    view_targets = design_view_targets(sys, targets)
    dsys, drel = exogenous_design_view(sys, rel)
    if pert_design is None:
        view = dsys
    else:
        view = apply_perturbation(dsys, pert_design, drel)
    report = protected_entries(view, view_targets, z, tol, trials=trials,
                               seed=seed)
    if sys.control_inputs is None:
        return report
    exo = sys.exogenous_inputs
    flags = {int(exo[j]): flag for j, flag in report.input_flags.items()}
    return replace(report, input_flags=flags)


@dataclass(frozen=True)
class AssumptionReport:
    """Outcome of the everywhere-full-row-rank check."""

    holds: bool
    rank_required: int
    rank_at_probe: int
    probe_z: float
    invariant_zeros: tuple = ()
    candidates_checked: int = 0

    def to_doc(self):
        return {
            "holds": self.holds,
            "rank_required": self.rank_required,
            "rank_at_probe": self.rank_at_probe,
            "probe_z": self.probe_z,
            "invariant_zeros": [{"re": z.real, "im": z.imag}
                                for z in self.invariant_zeros],
            "candidates_checked": self.candidates_checked,
        }


@dataclass(frozen=True, eq=False)
class ProtectionReport:
    """Per-entry protection flags plus a joint witness when one exists.

    ``all_protected`` is true only when a single kernel vector covers every
    requested entry simultaneously (and the frequency is nonzero whenever
    input entries are requested).
    """

    state_flags: dict
    input_flags: dict
    all_protected: bool
    witness_z: float
    witness_vector: np.ndarray = None
    null_dim: int = 0

    def to_doc(self):
        doc = {}
        for i in sorted(self.state_flags):
            doc[f"x0[{i}]"] = bool(self.state_flags[i])
        for j in sorted(self.input_flags):
            doc[f"u[{j}]"] = bool(self.input_flags[j])
        out = {
            "entries": doc,
            "all_protected": bool(self.all_protected),
            "witness_z": self.witness_z,
            "null_dim": int(self.null_dim),
        }
        if self.witness_vector is not None:
            out["witness_vector"] = self.witness_vector.tolist()
        return out


def _rank_complex(M, tol):
    """Rank of a complex matrix with the shared relative cutoff."""
    s = np.linalg.svd(M, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > tol.rank_tol * s[0]))


def _pencil_complex(sys, z):
    n = sys.n
    top = np.hstack([z * np.eye(n) - sys.A.astype(complex), -sys.B])
    bottom = np.hstack([sys.G.astype(complex), sys.H])
    return np.vstack([top, bottom])


def check_full_row_rank_everywhere(sys, tol=DEFAULT_TOL, draws=3, seed=20260819):
    """Check that ``D(z)`` has full row rank n+q at every complex z.

    A structurally impossible case (more released outputs than inputs)
    raises immediately.  Otherwise candidate rank-drop frequencies are
    extracted as the finite generalized eigenvalues of randomly compressed
    square pencils ``D(z) @ W`` over several independent draws, and each
    candidate is confirmed or discarded by an explicit rank evaluation of
    the uncompressed pencil.

    Returns
    -------
    AssumptionReport
        ``holds`` is true when no rank drop exists; confirmed drops are
        listed in ``invariant_zeros``.

    Raises
    ------
    AssumptionViolationError
        If q > p (structural: a wide pencil cannot have full row rank
        at every frequency when outputs outnumber inputs).
    """
    n, p, q = sys.n, sys.p, sys.q
    if q > p:
        raise AssumptionViolationError(
            f"structural violation: q={q} released outputs exceed p={p} inputs, "
            f"the (n+q) x (n+p) pencil cannot keep full row rank"
        )
    rng = np.random.default_rng(seed)
    rank_required = n + q
    probe_z = float(rng.uniform(0.5, 1.5))
    rank_probe = rank(pencil(sys, probe_z), tol)

    D0 = pencil(sys, 0.0)
    Ez = np.zeros((n + q, n + p))
    Ez[:n, :n] = np.eye(n)
    candidates = []
    for _ in range(draws):
        W = rng.normal(size=(n + p, n + q))
        lam = finite_generalized_eigenvalues(D0 @ W, Ez @ W)
        candidates.extend(lam.tolist())

    # dedupe nearby candidates, then confirm each against the real pencil
    confirmed = []
    seen = []
    checked = 0
    for z0 in sorted(candidates, key=lambda w: (w.real, w.imag)):
        if any(abs(z0 - w) <= 1e-7 * (1.0 + abs(w)) for w in seen):
            continue
        seen.append(z0)
        checked += 1
        if _rank_complex(_pencil_complex(sys, z0), tol) < rank_required:
            confirmed.append(complex(z0))

    holds = rank_probe == rank_required and not confirmed
    return AssumptionReport(
        holds=holds,
        rank_required=rank_required,
        rank_at_probe=rank_probe,
        probe_z=probe_z,
        invariant_zeros=tuple(confirmed),
        candidates_checked=checked,
    )


def protected_entries(sys, targets, z, tol=DEFAULT_TOL, trials=8, seed=0):
    """Which requested entries does the pencil kernel at ``z`` protect?

    Per-entry flags use the kernel basis column-wise; ``all_protected``
    additionally requires one vector covering every entry at once, searched
    deterministically over basis columns first and then over ``trials``
    random combinations.  Input entries are never protected at z = 0
    (the shadow input offset ``m z^k v2`` would vanish for k >= 1).

    Parameters
    ----------
    sys : LinearSystem
        The (already perturbed, if applicable) released system.
    targets : TargetSpec
    z : float
        Real probe frequency.
    """
    targets.validate(sys.n, sys.p)
    z = float(z)
    N = null_space(pencil(sys, z), tol)
    d = N.shape[1]
    z_ok_for_inputs = abs(z) > tol.zero_tol

    state_flags = {}
    for i in sorted(targets.state_targets):
        state_flags[i] = bool(d and np.abs(N[i]).max() > tol.zero_tol)
    input_flags = {}
    for j in sorted(targets.input_targets):
        input_flags[j] = bool(
            d and z_ok_for_inputs and np.abs(N[sys.n + j]).max() > tol.zero_tol
        )

    rows = sorted(targets.state_targets) + [sys.n + j
                                            for j in sorted(targets.input_targets)]
    witness = None
    if d and all(state_flags.values()) and all(input_flags.values()):
        if targets.input_targets and not z_ok_for_inputs:
            candidates = ()
        else:
            rng = np.random.default_rng(seed)
            candidates = [N[:, c] for c in range(d)]
            candidates += [N @ rng.normal(size=d) for _ in range(trials)]
        for v in candidates:
            nv = np.linalg.norm(v)
            if nv == 0.0:
                continue
            if np.abs(v[rows]).min() > tol.zero_tol * nv:
                witness = v / nv
                break

    return ProtectionReport(
        state_flags=state_flags,
        input_flags=input_flags,
        all_protected=witness is not None,
        witness_z=z,
        witness_vector=witness,
        null_dim=d,
    )


def min_protected_count(sys, z, tol=DEFAULT_TOL):
    """Guaranteed count of jointly unidentifiable entries at frequency z.

    Equal to the kernel dimension ``(n + p) - rank(D(z))``.  Requires a
    nonzero frequency so the count applies to input entries as well.
    """
    if abs(float(z)) <= tol.zero_tol:
        raise ValueError("min_protected_count requires a nonzero frequency z")
    return sys.n + sys.p - rank(pencil(sys, float(z)), tol)


def output_invariance_witness_test(sys, z, v, m=1.0, kappa=25,
                                   x0=None, inputs=None, seed=0):
    """Maximum released-output deviation between a trajectory and its shadow.

    The shadow starts at ``x0 + m v1`` and applies ``u(k) + m z^k v2`` where
    ``v = (v1, v2)``.  For a true kernel vector of ``D(z)`` the deviation is
    zero up to roundoff; the returned value is the max over the horizon of
    the 2-norm of the output difference.

    For |z| > 1 the horizon is capped so ``|m| |z|^k`` stays below 1e100;
    a warning reports the cap.
    """
    z = float(z)
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.size != sys.n + sys.p:
        raise DimensionError(f"witness vector has size {v.size}, "
                             f"expected n+p={sys.n + sys.p}")
    v1, v2 = v[: sys.n], v[sys.n:]
    if abs(z) > 1.0:
        cap = int(np.floor(np.log(1e100 / max(1.0, abs(m))) / np.log(abs(z))))
        if kappa > cap:
            warnings.warn(
                f"horizon capped at {cap} (was {kappa}) to keep |m z^k| bounded",
                RuntimeWarning,
            )
            kappa = cap
    rng = np.random.default_rng(seed)
    if x0 is None:
        x0 = rng.normal(size=sys.n)
    if inputs is None:
        inputs = rng.normal(size=(kappa + 1, sys.p))
    inputs = np.asarray(inputs, dtype=float)
    if inputs.shape[0] < kappa + 1:
        raise DimensionError("inputs must cover the full horizon")
    inputs = inputs[: kappa + 1]
    nominal = simulate(sys, x0, inputs)
    zpow = z ** np.arange(kappa + 1)
    shadow = simulate(sys, np.asarray(x0, dtype=float) + m * v1,
                      inputs + m * zpow[:, None] * v2[None, :])
    return float(np.linalg.norm(shadow.outputs - nominal.outputs, axis=1).max())
