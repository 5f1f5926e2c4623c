"""Semidefinite program container, solver interface, and KKT recheck.

Problems are stated in the form

    minimize    c' x
    subject to  sum_v E[e, v] x_v = f[e]                 (equalities)
                C_k + sum_v x_v M_{k, v}  >=  0          (one per block)

with ``>=`` meaning positive semidefinite.  Blocks of size one act as
scalar inequalities.  The backend is clarabel, an interior-point conic
solver; this module owns the problem representation, the conversion to the
solver's ``Ax + s = b`` form (semidefinite cones use the scaled upper
triangle, off-diagonal entries times sqrt(2)), dual extraction, and an
independent KKT recheck that recomputes every residual from the stored
problem data rather than trusting solver-reported numbers.

Dual convention: with equality multipliers ``y`` and block multipliers
``Z_k`` (symmetric, PSD), stationarity reads

    c_v + (E' y)_v - sum_k <M_{k, v}, Z_k> = 0

and the dual objective is ``-f' y - sum_k <C_k, Z_k>``.
"""

from __future__ import annotations

import io
import sys
import time
from dataclasses import dataclass, field

import clarabel
import numpy as np
from scipy import sparse

from .errors import DimensionError, SolverFailureError
from .linalg import as_matrix

__all__ = [
    "PsdBlock",
    "SdpProblem",
    "SdpSolution",
    "KktReport",
    "solve",
    "kkt_report",
    "nuclear_norm_problem",
]

_SQ2 = float(np.sqrt(2.0))

_STATUS_MAP = {
    "Solved": "optimal",
    "PrimalInfeasible": "infeasible",
    "DualInfeasible": "unbounded",
    "MaxIterations": "max_iters",
    "MaxTime": "max_iters",
}
# anything else (AlmostSolved, NumericalError, InsufficientProgress, ...)
# maps to "numerical_failure"; raw_status keeps the backend's word


class PsdBlock:
    """One matrix inequality ``C + sum_v x_v M_v >= 0``.

    Entries are addressed pointwise; (i, j) and (j, i) denote the same
    slot and repeated adds accumulate.  Size-one blocks are routed to the
    solver's nonnegative cone, larger ones to a semidefinite cone.
    """

    def __init__(self, size, label=None):
        size = int(size)
        if size < 1:
            raise ValueError(f"block size must be >= 1, got {size}")
        self.size = size
        self.label = label
        self.const = {}
        self.terms = {}

    def _key(self, i, j):
        i, j = int(i), int(j)
        if not (0 <= i < self.size and 0 <= j < self.size):
            raise DimensionError(
                f"entry ({i}, {j}) outside block of size {self.size}"
            )
        return (i, j) if i <= j else (j, i)

    def add_const(self, i, j, value):
        key = self._key(i, j)
        self.const[key] = self.const.get(key, 0.0) + float(value)

    def add_term(self, i, j, var, coef):
        key = self._key(i, j)
        var = int(var)
        if var < 0:
            raise DimensionError(f"negative variable index {var}")
        row = self.terms.setdefault(key, {})
        row[var] = row.get(var, 0.0) + float(coef)

    def constant_matrix(self):
        C = np.zeros((self.size, self.size))
        for (i, j), val in self.const.items():
            C[i, j] = val
            C[j, i] = val
        return C

    def evaluate(self, x):
        """Dense symmetric value of the block at the point ``x``."""
        S = self.constant_matrix()
        for (i, j), tv in self.terms.items():
            acc = 0.0
            for var, coef in tv.items():
                acc += coef * x[var]
            S[i, j] += acc
            if i != j:
                S[j, i] += acc
        return S


class SdpProblem:
    """Incremental container for variables, equalities, and PSD blocks."""

    def __init__(self):
        self._names = []
        self.objective = {}
        self.equalities = []
        self.blocks = []

    @property
    def n_vars(self):
        return len(self._names)

    def add_var(self, name=None):
        idx = len(self._names)
        self._names.append(name if name is not None else f"x{idx}")
        return idx

    def add_vars(self, count, prefix="x"):
        return [self.add_var(f"{prefix}{k}") for k in range(int(count))]

    def var_name(self, var):
        return self._names[var]

    def add_objective(self, var, coef):
        var = self._check_var(var)
        self.objective[var] = self.objective.get(var, 0.0) + float(coef)

    def add_equality(self, terms, rhs):
        """Add ``sum coef * x_var = rhs``; ``terms`` is (var, coef) pairs."""
        td = {}
        items = terms.items() if isinstance(terms, dict) else terms
        for var, coef in items:
            var = self._check_var(var)
            td[var] = td.get(var, 0.0) + float(coef)
        self.equalities.append((td, float(rhs)))

    def new_psd_block(self, size, label=None):
        blk = PsdBlock(size, label)
        self.blocks.append(blk)
        return blk

    def _check_var(self, var):
        var = int(var)
        if not (0 <= var < len(self._names)):
            raise DimensionError(
                f"variable index {var} out of range (have {len(self._names)})"
            )
        return var


@dataclass(frozen=True, eq=False)
class SdpSolution:
    """Primal-dual outcome of one solve.

    ``status`` is one of optimal, infeasible, unbounded, max_iters,
    numerical_failure; ``raw_status`` keeps the backend's exact word.
    ``block_duals`` are symmetric matrices in block creation order.
    ``iteration_log`` holds one dict per interior-point iteration parsed
    from the solver's own progress table (pcost, dcost, gap, pres, dres,
    kt, mu, step when present).  ``certificate`` carries the backend's
    infeasibility ray when status is infeasible or unbounded.
    """

    status: str
    raw_status: str
    x: np.ndarray
    objective: float
    eq_duals: np.ndarray
    block_duals: list
    iterations: int
    solve_seconds: float
    iteration_log: list = field(default_factory=list)
    certificate: np.ndarray | None = None

    def value(self, var):
        return float(self.x[int(var)])


@dataclass(frozen=True)
class KktReport:
    """Recomputed optimality residuals.

    ``primal_residual``, ``dual_residual``, ``duality_gap`` and
    ``complementarity`` are all scale-normalized; ``objective`` and
    ``dual_objective`` are raw values.
    """

    primal_residual: float
    dual_residual: float
    duality_gap: float
    complementarity: float
    objective: float
    dual_objective: float

    def max_residual(self):
        return max(self.primal_residual, self.dual_residual,
                   self.duality_gap, abs(self.complementarity))

    def to_doc(self):
        return {
            "primal_residual": self.primal_residual,
            "dual_residual": self.dual_residual,
            "duality_gap": self.duality_gap,
            "complementarity": self.complementarity,
            "objective": self.objective,
            "dual_objective": self.dual_objective,
        }


def _svec_index(i, j):
    # column-major upper triangle, i <= j
    return j * (j + 1) // 2 + i


def _smat(vec, d):
    M = np.zeros((d, d))
    k = 0
    for j in range(d):
        for i in range(j + 1):
            if i == j:
                M[i, i] = vec[k]
            else:
                M[i, j] = M[j, i] = vec[k] / _SQ2
            k += 1
    return M


def _convert(problem):
    nv = problem.n_vars
    if nv == 0:
        raise ValueError("problem has no variables")
    c = np.zeros(nv)
    for var, coef in problem.objective.items():
        c[var] = coef

    rows, cols, vals, b = [], [], [], []
    cones = []
    nrow = 0

    n_eq = len(problem.equalities)
    for terms, rhs in problem.equalities:
        for var, coef in terms.items():
            rows.append(nrow)
            cols.append(var)
            vals.append(coef)
        b.append(rhs)
        nrow += 1
    if n_eq:
        cones.append(clarabel.ZeroConeT(n_eq))

    for blk in problem.blocks:
        for tv in blk.terms.values():
            for var in tv:
                problem._check_var(var)

    ones = [k for k, blk in enumerate(problem.blocks) if blk.size == 1]
    bigs = [k for k, blk in enumerate(problem.blocks) if blk.size > 1]
    spans = {}

    for bi in ones:
        blk = problem.blocks[bi]
        b.append(blk.const.get((0, 0), 0.0))
        for var, coef in blk.terms.get((0, 0), {}).items():
            rows.append(nrow)
            cols.append(var)
            vals.append(-coef)
        spans[bi] = (nrow, nrow + 1)
        nrow += 1
    if ones:
        cones.append(clarabel.NonnegativeConeT(len(ones)))

    for bi in bigs:
        blk = problem.blocks[bi]
        d = blk.size
        nsvec = d * (d + 1) // 2
        base = nrow
        bvec = np.zeros(nsvec)
        for (i, j), val in blk.const.items():
            bvec[_svec_index(i, j)] += val * (1.0 if i == j else _SQ2)
        for (i, j), tv in blk.terms.items():
            r = base + _svec_index(i, j)
            sc = 1.0 if i == j else _SQ2
            for var, coef in tv.items():
                rows.append(r)
                cols.append(var)
                vals.append(-coef * sc)
        b.extend(bvec.tolist())
        spans[bi] = (base, base + nsvec)
        nrow += nsvec
        cones.append(clarabel.PSDTriangleConeT(d))

    A = sparse.csc_matrix((vals, (rows, cols)), shape=(nrow, nv))
    return A, np.asarray(b, dtype=float), cones, c, n_eq, spans


def _capture_stdout(fn):
    """Run ``fn`` with ``sys.stdout`` swapped for an in-memory buffer.

    The backend resolves the interpreter's current ``sys.stdout`` object
    when it prints, so an object-level swap is the reliable capture point
    (file-descriptor redirection misses it under test harnesses that
    replace the stream object themselves).
    """
    buf = io.StringIO()
    old = sys.stdout
    try:
        old.flush()
    except (AttributeError, OSError):
        pass
    sys.stdout = buf
    try:
        out = fn()
    finally:
        sys.stdout = old
    return out, buf.getvalue()


def _parse_iteration_log(text):
    entries = []
    for line in text.splitlines():
        toks = line.split()
        if not toks or not toks[0].isdigit():
            continue
        nums = []
        for t in toks[1:]:
            try:
                nums.append(float(t))
            except ValueError:
                break  # the step column prints dashes on iteration 0
        if len(nums) < 7:
            continue
        entry = {
            "iter": int(toks[0]),
            "pcost": nums[0],
            "dcost": nums[1],
            "gap": nums[2],
            "pres": nums[3],
            "dres": nums[4],
            "kt": nums[5],
            "mu": nums[6],
        }
        if len(nums) >= 8:
            entry["step"] = nums[7]
        entries.append(entry)
    return entries


def solve(problem, tol=1e-7, max_iters=100, verbose=False,
          capture_iterations=True):
    """Solve the problem and return an SdpSolution.

    ``tol`` sets the backend's gap and feasibility tolerances.  With
    ``capture_iterations`` the solver's progress table is recorded into
    ``iteration_log`` without reaching the terminal; ``verbose=True``
    additionally echoes it.
    """
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    A, b, cones, c, n_eq, spans = _convert(problem)

    settings = clarabel.DefaultSettings()
    settings.verbose = bool(verbose or capture_iterations)
    settings.tol_gap_abs = tol
    settings.tol_gap_rel = tol
    settings.tol_feas = tol
    settings.max_iter = int(max_iters)

    P = sparse.csc_matrix((problem.n_vars, problem.n_vars))
    solver = clarabel.DefaultSolver(P, c, A, b, cones, settings)

    t0 = time.perf_counter()
    if settings.verbose:
        raw, text = _capture_stdout(solver.solve)
    else:
        raw, text = solver.solve(), ""
    wall = time.perf_counter() - t0
    if verbose and text:
        sys.stdout.write(text)

    raw_status = str(raw.status).split(".")[-1]
    status = _STATUS_MAP.get(raw_status, "numerical_failure")

    x = np.asarray(raw.x, dtype=float)
    z = np.asarray(raw.z, dtype=float)
    eq_duals = z[:n_eq].copy()
    block_duals = []
    for bi, blk in enumerate(problem.blocks):
        lo, hi = spans[bi]
        if blk.size == 1:
            block_duals.append(np.array([[z[lo]]]))
        else:
            block_duals.append(_smat(z[lo:hi], blk.size))

    objective = float(c @ x) if np.all(np.isfinite(x)) else float("nan")
    certificate = None
    if status == "infeasible":
        certificate = z.copy()
    elif status == "unbounded":
        certificate = x.copy()

    log = _parse_iteration_log(text)
    iterations = int(getattr(raw, "iterations", 0) or
                     (log[-1]["iter"] if log else 0))

    return SdpSolution(
        status=status,
        raw_status=raw_status,
        x=x,
        objective=objective,
        eq_duals=eq_duals,
        block_duals=block_duals,
        iterations=iterations,
        solve_seconds=wall,
        iteration_log=log,
        certificate=certificate,
    )


def kkt_report(problem, solution):
    """Recompute KKT residuals from the stored problem data.

    All four residual fields are normalized: feasibility violations by one
    plus the scale of the data they violate, gap and complementarity by
    one plus the objective magnitudes.  Raises SolverFailureError when the
    solution carries no finite primal point (infeasible or failed solves).
    """
    x = solution.x
    if (solution.status in ("infeasible", "unbounded")
            or x.shape != (problem.n_vars,)
            or not np.all(np.isfinite(x))):
        raise SolverFailureError(
            "solution carries no finite primal point to check"
        )
    nv = problem.n_vars
    c = np.zeros(nv)
    for var, coef in problem.objective.items():
        c[var] = coef
    objective = float(c @ x)

    eq_viol = 0.0
    f_max = 0.0
    f_dot_y = 0.0
    for idx, (terms, rhs) in enumerate(problem.equalities):
        val = sum(coef * x[var] for var, coef in terms.items())
        eq_viol = max(eq_viol, abs(val - rhs))
        f_max = max(f_max, abs(rhs))
        f_dot_y += rhs * solution.eq_duals[idx]

    block_viol = 0.0
    dual_cone_viol = 0.0
    comp_raw = 0.0
    const_inner = 0.0
    for k, blk in enumerate(problem.blocks):
        S = blk.evaluate(x)
        Z = solution.block_duals[k]
        if blk.size == 1:
            lmin_s = S[0, 0]
            lmin_z = Z[0, 0]
        else:
            lmin_s = float(np.linalg.eigvalsh(S)[0])
            lmin_z = float(np.linalg.eigvalsh(Z)[0])
        block_viol = max(
            block_viol,
            max(0.0, -lmin_s) / (1.0 + np.linalg.norm(S, "fro")),
        )
        dual_cone_viol = max(
            dual_cone_viol,
            max(0.0, -lmin_z) / (1.0 + np.linalg.norm(Z, "fro")),
        )
        comp_raw += float((S * Z).sum())
        const_inner += float((blk.constant_matrix() * Z).sum())

    primal_residual = max(eq_viol / (1.0 + f_max), block_viol)

    r = c.copy()
    for idx, (terms, rhs) in enumerate(problem.equalities):
        y = solution.eq_duals[idx]
        for var, coef in terms.items():
            r[var] += coef * y
    for k, blk in enumerate(problem.blocks):
        Z = solution.block_duals[k]
        for (i, j), tv in blk.terms.items():
            w = Z[i, j] * (1.0 if i == j else 2.0)
            for var, coef in tv.items():
                r[var] -= coef * w
    c_max = float(np.max(np.abs(c))) if nv else 0.0
    dual_residual = max(float(np.max(np.abs(r))) / (1.0 + c_max),
                        dual_cone_viol)

    dual_objective = -f_dot_y - const_inner
    scale = 1.0 + abs(objective) + abs(dual_objective)
    return KktReport(
        primal_residual=float(primal_residual),
        dual_residual=float(dual_residual),
        duality_gap=abs(objective - dual_objective) / scale,
        complementarity=comp_raw / scale,
        objective=objective,
        dual_objective=float(dual_objective),
    )


def nuclear_norm_problem(M):
    """SDP whose optimal value is twice the nuclear norm of ``M``.

    minimize tr(W1) + tr(W2) subject to [[W1, M], [M', W2]] >= 0.  Used
    as a solver sanity check against the SVD and as the template for the
    rank-surrogate term inside the sparse design.
    """
    M = as_matrix(M)
    r, cdim = M.shape
    prob = SdpProblem()
    blk = prob.new_psd_block(r + cdim, label="nuclear")
    for j in range(r):
        for i in range(j + 1):
            v = prob.add_var(f"w1_{i}_{j}")
            blk.add_term(i, j, v, 1.0)
            if i == j:
                prob.add_objective(v, 1.0)
    for j in range(cdim):
        for i in range(j + 1):
            v = prob.add_var(f"w2_{i}_{j}")
            blk.add_term(r + i, r + j, v, 1.0)
            if i == j:
                prob.add_objective(v, 1.0)
    for i in range(r):
        for j in range(cdim):
            if M[i, j] != 0.0:
                blk.add_const(i, r + j, M[i, j])
    return prob
