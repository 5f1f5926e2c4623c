"""Sparsity-first perturbation design via a semidefinite relaxation.

Minimizing the number of perturbed entries directly is combinatorial, so
the design solves the standard convex surrogate: the entrywise l1 norm
stands in for the count, a weighted nuclear norm of the perturbed pencil
promotes the rank drop that creates protected directions, and a shifted
PSD constraint on the square input block keeps the perturbed input
matrix invertible, which preserves controllability.  After the solve,
near-zero entries are snapped to exact zero and every reported claim
(rank, protection, controllability) is recomputed from the cleaned
perturbation instead of trusted from the solver.

The same block assembly serves the gain-first variant in ``design_l2``:
swapping the entrywise epigraph for a single spectral-norm epigraph
block turns the sparsity cost into the released-output gain.
"""

from __future__ import annotations

import csv
import io
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import sdp
from .controllability import is_controllable, symmetric_psd_certificate
from .errors import (
    AssumptionViolationError,
    PrivPerturbError,
    SolverFailureError,
)
from .linalg import DEFAULT_TOL, Tolerance, anchored_rank, singular_values
from .privacy import view_protected_entries
from .results import DesignResult, sparsity_threshold
from .system import (
    Perturbation,
    apply_perturbation,
    embed_design_perturbation,
    exogenous_design_view,
    f_matrix,
    pencil,
)

__all__ = [
    "L0DesignConfig",
    "SdpLayout",
    "SweepRow",
    "SWEEP_COLUMNS",
    "build_relaxation",
    "design",
    "solved_rank_cutoff",
    "sweep_c",
    "sweep_csv",
]


@dataclass(frozen=True)
class L0DesignConfig:
    """Weights and solver options for the sparsity relaxation.

    ``c`` trades sparsity against rank loss: small values keep the
    perturbation near zero and the pencil rank full, large values buy a
    deeper rank drop with more nonzero entries.  ``eps`` is the
    controllability margin: the solved input block satisfies
    ``(1 - eps) I + K_si >= 0``, so ``I + K_si >= eps I`` is invertible
    for any positive value; one or more is accepted but forces the input
    block itself into the (shifted) PSD cone, a stricter regime than the
    margin needs.  ``rank_target`` is advisory only: the relaxation has
    no hard rank constraint, the value is just reported against the
    achieved rank.
    """

    c: float = 1.0
    eps: float = 0.1
    rank_target: int | None = None
    tol: Tolerance = DEFAULT_TOL
    sdp_tol: float = 1e-7
    sdp_max_iters: int = 200
    verbose: bool = False

    def __post_init__(self):
        if not self.c > 0.0:
            raise ValueError(f"c must be positive, got {self.c}")
        if not self.eps > 0.0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if self.rank_target is not None and int(self.rank_target) < 1:
            raise ValueError(f"rank_target must be >= 1, got {self.rank_target}")


@dataclass(frozen=True, eq=False)
class SdpLayout:
    """Variable indices of one assembled relaxation.

    ``k`` maps each perturbation entry to its scalar variable; ``w1`` and
    ``w2`` address the symmetric nuclear slack blocks, mirrored entries
    sharing one variable.  ``t`` holds the entrywise epigraph variables
    (same shape as ``k``); the spectral form has ``gain`` instead.
    """

    z: int
    k: np.ndarray
    w1: np.ndarray
    w2: np.ndarray
    t: np.ndarray | None = None
    gain: int | None = None

    def k_value(self, x):
        """Stacked perturbation matrix at the solution point ``x``."""
        return np.asarray(x, dtype=float)[self.k]

    def w1_value(self, x):
        return np.asarray(x, dtype=float)[self.w1]

    def w2_value(self, x):
        return np.asarray(x, dtype=float)[self.w2]


def solved_rank_cutoff(f_norm, n_entries, thr, sdp_tol, anchor):
    """Singular-value cutoff for ranking a solver-produced pencil.

    Hard thresholding moves the pencil by at most ``f_norm * thr *
    sqrt(n_entries)`` and the interior-point solve resolves dead
    directions only to its own tolerance at the pencil's scale; ranks
    quoted for solved designs ignore anything below the sum of the two.
    """
    return (float(f_norm) * float(thr) * float(np.sqrt(n_entries))
            + 10.0 * float(sdp_tol) * float(anchor))


def _symmetric_vars(prob, d, prefix):
    """Upper-triangle variables addressed through a full (d, d) index grid."""
    idx = np.zeros((d, d), dtype=int)
    for j in range(d):
        for i in range(j + 1):
            v = prob.add_var(f"{prefix}[{i},{j}]")
            idx[i, j] = v
            idx[j, i] = v
    return idx


def build_relaxation(sys, c, eps, rel=None, tol=DEFAULT_TOL,
                     objective="entrywise"):
    """Assemble the relaxation for the design view of ``sys``.

    Returns ``(problem, layout)``.  With ``objective="entrywise"`` the
    cost is ``sum |K_ij| + c (tr W1 + tr W2)``, one epigraph variable per
    entry; with ``"spectral"`` it is the released-output gain plus the
    same nuclear penalty, via a single epigraph block.

    The original pair (A, B) must be controllable: the invertibility
    certificate on ``I + K_si`` transfers controllability from the
    original system to the perturbed one and has nothing to transfer
    otherwise.
    """
    if not c > 0.0:
        raise ValueError(f"c must be positive, got {c}")
    if not eps > 0.0:
        raise ValueError(f"eps must be positive, got {eps}")
    if objective not in ("entrywise", "spectral"):
        raise ValueError(f"unknown objective {objective!r}")
    verdict = is_controllable(sys.A, sys.B, tol)
    if not verdict.controllable:
        raise AssumptionViolationError(
            "original pair (A, B) is not controllable (reachability rank "
            f"{verdict.rank} of {sys.n}); the perturbed system would "
            "inherit nothing"
        )

    dsys, drel = exogenous_design_view(sys, rel)
    n, p, q, l = dsys.n, dsys.p, dsys.q, drel.l
    d1, d2 = n + q, n + p

    prob = sdp.SdpProblem()
    z = prob.add_var("z")
    k = np.array(
        [[prob.add_var(f"K[{r},{s}]") for s in range(d2)] for r in range(p + l)]
    )
    w1 = _symmetric_vars(prob, d1, "W1")
    w2 = _symmetric_vars(prob, d2, "W2")

    # input-feedthrough block constrained symmetric so the PSD margin below
    # is meaningful
    for a in range(p):
        for b in range(a + 1, p):
            prob.add_equality([(k[a, n + b], 1.0), (k[b, n + a], -1.0)], 0.0)

    D0 = pencil(dsys, 0.0)
    F = f_matrix(dsys, drel)

    big = prob.new_psd_block(d1 + d2, label="nuclear")
    for i in range(d1):
        for j in range(d2):
            if D0[i, j] != 0.0:
                big.add_const(i, d1 + j, D0[i, j])
            if i == j and i < n:
                big.add_term(i, d1 + j, z, 1.0)
            for a in range(p + l):
                if F[i, a] != 0.0:
                    big.add_term(i, d1 + j, k[a, j], F[i, a])
    for j in range(d1):
        for i in range(j + 1):
            big.add_term(i, j, w1[i, j], 1.0)
    for j in range(d2):
        for i in range(j + 1):
            big.add_term(d1 + i, d1 + j, w2[i, j], 1.0)
    for i in range(d1):
        prob.add_objective(w1[i, i], float(c))
    for i in range(d2):
        prob.add_objective(w2[i, i], float(c))

    guard = prob.new_psd_block(p, label="input_margin")
    for i in range(p):
        guard.add_const(i, i, 1.0 - float(eps))
        for j in range(i, p):
            guard.add_term(i, j, k[i, n + j], 1.0)

    if objective == "entrywise":
        t = np.array(
            [[prob.add_var(f"t[{r},{s}]") for s in range(d2)]
             for r in range(p + l)]
        )
        for r in range(p + l):
            for s in range(d2):
                prob.add_objective(t[r, s], 1.0)
                up = prob.new_psd_block(1)
                up.add_term(0, 0, t[r, s], 1.0)
                up.add_term(0, 0, k[r, s], -1.0)
                lo = prob.new_psd_block(1)
                lo.add_term(0, 0, t[r, s], 1.0)
                lo.add_term(0, 0, k[r, s], 1.0)
        layout = SdpLayout(z=z, k=k, w1=w1, w2=w2, t=t)
    else:
        gain = prob.add_var("gain")
        prob.add_objective(gain, 1.0)
        # rows of F below the state block are the released-output map
        spec = prob.new_psd_block(q + d2, label="gain")
        for i in range(q + d2):
            spec.add_term(i, i, gain, 1.0)
        for i in range(q):
            for j in range(d2):
                for a in range(p + l):
                    if F[n + i, a] != 0.0:
                        spec.add_term(i, q + j, k[a, j], F[n + i, a])
        layout = SdpLayout(z=z, k=k, w1=w1, w2=w2, gain=gain)

    return prob, layout


def _solve_and_verify(sys, targets, rel, seed, c, eps, tol, sdp_tol,
                      sdp_max_iters, verbose, objective, method,
                      rank_target=None):
    """Shared driver: solve one relaxation, clean the point, remeasure."""
    t0 = time.perf_counter()
    if targets is not None:
        targets.validate(sys.n, sys.p)

    prob, layout = build_relaxation(sys, c, eps, rel, tol,
                                    objective=objective)
    sol = sdp.solve(prob, tol=sdp_tol, max_iters=sdp_max_iters,
                    verbose=verbose)
    if sol.status in ("infeasible", "unbounded") or not np.all(np.isfinite(sol.x)):
        raise SolverFailureError(
            f"perturbation relaxation solve failed: {sol.raw_status}"
        )

    dsys, drel = exogenous_design_view(sys, rel)
    n, p = dsys.n, dsys.p
    z_hat = float(sol.x[layout.z])

    K = layout.k_value(sol.x)
    # mirrored entries agree only to solver tolerance; snap them exactly
    # so thresholding cannot split a symmetric pair
    K[:p, n:] = 0.5 * (K[:p, n:] + K[:p, n:].T)
    thr = sparsity_threshold(K)
    K_clean = np.where(np.abs(K) > thr, K, 0.0)

    pert_design = Perturbation.from_matrix(K_clean, n, p)
    pert = embed_design_perturbation(sys, pert_design)

    bare = pencil(dsys, z_hat)
    F_d = f_matrix(dsys, drel)
    anchor = float(np.linalg.norm(bare, 2))
    shifted = bare + F_d @ K_clean
    cutoff = solved_rank_cutoff(np.linalg.norm(F_d, 2), K_clean.size,
                                thr, sdp_tol, anchor)
    pencil_rank = anchored_rank(shifted, anchor, tol, floor=cutoff)
    l2_gain = float(np.linalg.norm(F_d[n:, :] @ K_clean, 2))

    perturbed = apply_perturbation(sys, pert, rel)
    if sys.control_inputs is None:
        pair_b = perturbed.B
    else:
        pair_b = perturbed.B[:, list(sys.control_inputs)]
    verdict = is_controllable(perturbed.A, pair_b, tol)

    protection = None
    if targets is not None:
        # certify on the design-view pencil; kernel support on the
        # controller-driven columns proves nothing to the requester
        protection = view_protected_entries(sys, targets, z_hat,
                                            pert_design=pert_design, rel=rel,
                                            tol=tol, seed=seed)

    # the solver meets the PSD margin only to its feasibility tolerance
    # and thresholding moves entries by up to thr, so allow that much
    # eigenvalue slack; capped at eps/2 to keep the certificate sound
    cert_slack = min(max(tol.zero_tol, 100.0 * sdp_tol, p * thr),
                     eps / 2.0)
    certified, min_eig = symmetric_psd_certificate(pert_design.k_si,
                                                   eps, tol,
                                                   slack=cert_slack)

    kkt = sdp.kkt_report(prob, sol)
    diagnostics = {
        "c": float(c),
        "eps": float(eps),
        "l1_value": float(np.abs(K_clean).sum()),
        "nuclear_value": float(singular_values(shifted).sum()),
        "threshold": float(thr),
        "rank_cutoff": float(cutoff),
        "certificate": {"certified": bool(certified),
                        "min_eig": float(min_eig)},
        "solver": {
            "status": sol.status,
            "raw_status": sol.raw_status,
            "objective": sol.objective,
            "iterations": sol.iterations,
            "solve_seconds": sol.solve_seconds,
            "kkt_max_residual": float(kkt.max_residual()),
        },
    }
    if layout.gain is not None:
        diagnostics["gain_epigraph"] = float(sol.x[layout.gain])
    if rank_target is not None:
        diagnostics["rank_target"] = int(rank_target)
        diagnostics["rank_target_met"] = bool(
            pencil_rank <= int(rank_target) - 1
        )

    return DesignResult(
        method=method,
        perturbation=pert,
        z=z_hat,
        pencil_rank=pencil_rank,
        l0_count=pert.l0_count(sparsity_threshold(pert.assemble())),
        l2_gain=l2_gain,
        controllability=verdict,
        protection=protection,
        solve_seconds=time.perf_counter() - t0,
        diagnostics=diagnostics,
    )


def design(sys, targets=None, cfg=None, rel=None, seed=0):
    """Solve the sparsity relaxation and verify the outcome.

    The solved perturbation is symmetrized on its input-feedthrough
    block, hard-thresholded at :func:`sparsity_threshold`, and only then
    measured: pencil rank at the solved frequency, entry count, released
    gain, controllability of the perturbed pair, and protection of the
    requested targets.  Solver trouble short of an infeasibility
    certificate does not raise; the recomputed numbers speak for the
    point that was found, and the solver status is in the diagnostics.

    Parameters
    ----------
    sys : LinearSystem
    targets : TargetSpec, optional
    cfg : L0DesignConfig, optional
    rel : ReleaseMap, optional
    seed : int
        Seed for the protection probe.

    Returns
    -------
    DesignResult
    """
    cfg = cfg if cfg is not None else L0DesignConfig()
    return _solve_and_verify(
        sys, targets, rel, seed, cfg.c, cfg.eps, cfg.tol, cfg.sdp_tol,
        cfg.sdp_max_iters, cfg.verbose, "entrywise", "sdp_sparsity",
        cfg.rank_target,
    )


SWEEP_COLUMNS = (
    "c",
    "pencil_rank",
    "l0_count",
    "l1_value",
    "nuclear_value",
    "controllable",
    "all_protected",
    "solve_seconds",
)


@dataclass(frozen=True, eq=False)
class SweepRow:
    """One grid point of a weight sweep; ``error`` is set when it failed."""

    c: float
    pencil_rank: int | None = None
    l0_count: int | None = None
    l1_value: float | None = None
    nuclear_value: float | None = None
    controllable: bool | None = None
    all_protected: bool | None = None
    solve_seconds: float = 0.0
    error: str | None = None
    result: DesignResult | None = None

    def csv_fields(self):
        return [_csv_cell(getattr(self, name)) for name in SWEEP_COLUMNS]


def _csv_cell(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".12g")
    return str(value)


def _sweep_point(args):
    sys_, targets, c, eps, rel, seed, tol, sdp_tol, sdp_max_iters = args
    t0 = time.perf_counter()
    try:
        cfg = L0DesignConfig(c=c, eps=eps, tol=tol, sdp_tol=sdp_tol,
                             sdp_max_iters=sdp_max_iters)
        res = design(sys_, targets=targets, cfg=cfg, rel=rel, seed=seed)
    except (PrivPerturbError, np.linalg.LinAlgError, ValueError) as exc:
        return SweepRow(c=c, solve_seconds=time.perf_counter() - t0,
                        error=f"{type(exc).__name__}: {exc}")
    protection = res.protection
    return SweepRow(
        c=c,
        pencil_rank=int(res.pencil_rank),
        l0_count=int(res.l0_count),
        l1_value=float(res.diagnostics["l1_value"]),
        nuclear_value=float(res.diagnostics["nuclear_value"]),
        controllable=bool(res.controllability.controllable),
        all_protected=(None if protection is None
                       else bool(protection.all_protected)),
        solve_seconds=res.solve_seconds,
        result=res,
    )


def sweep_c(sys, targets, c_grid, eps=0.1, rel=None, seed=0, jobs=1,
            tol=DEFAULT_TOL, sdp_tol=1e-7, sdp_max_iters=200):
    """Run one design per weight and tabulate the outcomes.

    A failure at one grid point is recorded in that row's ``error`` and
    the sweep continues.  With ``jobs > 1`` the grid points run in
    separate processes; every point draws its own deterministic seed
    from ``seed`` either way, so the parallel and serial tables match.

    Returns
    -------
    list of SweepRow, ordered by c.
    """
    grid = [float(c) for c in c_grid]
    if not grid:
        raise ValueError("c_grid must be non-empty")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("c_grid must be strictly ascending")
    seeds = [int(s.generate_state(1)[0])
             for s in np.random.SeedSequence(int(seed)).spawn(len(grid))]
    args = [(sys, targets, c, float(eps), rel, s, tol, float(sdp_tol),
             int(sdp_max_iters)) for c, s in zip(grid, seeds)]
    if int(jobs) > 1:
        with ProcessPoolExecutor(max_workers=int(jobs)) as pool:
            return list(pool.map(_sweep_point, args))
    return [_sweep_point(a) for a in args]


def sweep_csv(rows):
    """Render sweep rows as CSV text with the stable column set."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_COLUMNS)
    for row in rows:
        writer.writerow(row.csv_fields())
    return buf.getvalue()
