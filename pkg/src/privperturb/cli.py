"""Command-line front end: check, design, simulate, oracle.

One binary with four subcommands.  ``check`` verifies the release
requirements of a system file and reports which requested entries a
tuned design could hide.  ``design`` produces a perturbation by one of
three methods and writes it with a machine-readable report.
``simulate`` runs the thermal closed loop under a stored perturbation
and writes per-step disutility tables.  ``oracle`` exposes the slow
reference computations used to validate the fast paths.

Exit codes
    0   success; for ``design`` this additionally means every requested
        entry came out protected
    2   malformed input: unreadable or inconsistent files, bad flags,
        dimension mismatches
    3   the semidefinite or SVD solver failed to produce a usable point
    4   protection not achievable with the requested parameters;
        best-effort artifacts are still written

Every command is deterministic given ``--seed``.  Report JSON files are
written with 12-significant-digit floats and sorted keys so repeat runs
are byte-identical; perturbation files keep exact floats so a stored
design survives a round trip bit for bit.  All files are written
atomically (temp file + rename).

Numeric options resolve as: command-line flag, then the ``--config``
JSON file (keys are the long option names with underscores), then the
built-in default.  The environment variable PRIVPERTURB_LOG sets log
verbosity (debug, info, warning, error).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time

import numpy as np

from . import __version__
from .design_l0 import L0DesignConfig, design, sweep_c, sweep_csv
from .design_l2 import (
    frobenius_optimal_z,
    rank_floor,
    sdp_gain_design,
    svd_design,
    tune_csv,
    tune_rho,
)
from .errors import (
    AssumptionViolationError,
    InfeasibleRankTargetError,
    PrivPerturbError,
    ProtectionNotAchievableError,
    SolverFailureError,
    SvdConvergenceError,
)
from .hvac import closed_loop_sim, dp_baseline, sim_csv
from .linalg import DEFAULT_TOL, Tolerance, as_matrix
from .oracles import grid_min_frobenius, sparsest_null_vector
from .privacy import (
    TargetSpec,
    check_full_row_rank_everywhere,
    view_protected_entries,
)
from .sdp import kkt_report, nuclear_norm_problem
from .sdp import solve as sdp_solve
from .serialize import (
    atomic_write_text,
    dumps_canonical,
    load_perturbation,
    load_system,
    save_perturbation,
)
from .system import exogenous_design_view

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_SOLVER = 3
EXIT_PROTECTION = 4

log = logging.getLogger("privperturb.cli")


def parse_targets(text):
    """Parse ``"x0:1,7;u:6"`` into a TargetSpec, or None for empty input."""
    if text is None or not str(text).strip():
        return None
    states: set[int] = set()
    inputs: set[int] = set()
    for segment in str(text).split(";"):
        segment = segment.strip()
        if not segment:
            continue
        kind, sep, items = segment.partition(":")
        kind = kind.strip()
        if not sep or kind not in ("x0", "u"):
            raise ValueError(
                f"bad target segment {segment!r}; expected x0:i,j or u:k"
            )
        try:
            idx = {int(tok) for tok in items.split(",") if tok.strip()}
        except ValueError:
            raise ValueError(f"non-integer index in target segment {segment!r}")
        if not idx:
            raise ValueError(f"empty index list in target segment {segment!r}")
        if min(idx) < 0:
            raise ValueError(f"negative index in target segment {segment!r}")
        (states if kind == "x0" else inputs).update(idx)
    if not states and not inputs:
        raise ValueError(f"no entries found in targets {text!r}")
    return TargetSpec(frozenset(states), frozenset(inputs))


def _validate_targets(targets, sys_):
    if targets is None:
        return
    bad_x = sorted(i for i in targets.state_targets if i >= sys_.n)
    bad_u = sorted(j for j in targets.input_targets if j >= sys_.p)
    if bad_x or bad_u:
        raise ValueError(
            f"targets out of range for an n={sys_.n}, p={sys_.p} system: "
            f"states {bad_x}, inputs {bad_u}"
        )


def _load_config(path):
    if path is None:
        return {}
    with open(path) as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    return doc


def _opt(args, config, name, default):
    """Flag value if given, else config-file value, else the default."""
    value = getattr(args, name, None)
    if value is not None:
        return value
    if name in config:
        return config[name]
    dashed = name.replace("_", "-")
    if dashed in config:
        return config[dashed]
    return default


def _tolerance(args, config):
    rank_tol = _opt(args, config, "tol_rank", DEFAULT_TOL.rank_tol)
    zero_tol = _opt(args, config, "tol_zero", DEFAULT_TOL.zero_tol)
    return Tolerance(rank_tol=float(rank_tol), zero_tol=float(zero_tol))


def _emit_report(doc, out_path):
    text = dumps_canonical(doc, digits=12)
    if out_path:
        atomic_write_text(out_path, text)
        print(f"wrote {out_path}")
    else:
        sys.stdout.write(text)


def _load_matrix_file(path):
    with open(path) as fh:
        doc = json.load(fh)
    if isinstance(doc, dict):
        if "M" not in doc:
            raise ValueError(f"{path}: matrix document needs an 'M' field")
        doc = doc["M"]
    return as_matrix(doc)


def _system_summary(sys_, rel):
    return {
        "n": sys_.n,
        "p": sys_.p,
        "q": sys_.q,
        "l": sys_.q if rel is None else rel.l,
        "control_inputs": (
            None if sys_.control_inputs is None else list(sys_.control_inputs)
        ),
    }


def cmd_check(args):
    config = _load_config(args.config)
    tol = _tolerance(args, config)
    sys_, rel = load_system(args.system)
    targets = parse_targets(_opt(args, config, "targets", None))
    _validate_targets(targets, sys_)

    dsys, _ = exogenous_design_view(sys_, rel)
    doc = {"system": _system_summary(sys_, rel),
           "design_view_inputs": dsys.p}
    if dsys.q > dsys.p:
        # taller than wide: full row rank is impossible no matter the maps
        doc["structural_note"] = (
            f"{dsys.q} released outputs exceed the {dsys.p} perturbable "
            "input channels; the everywhere-full-row-rank requirement "
            "fails structurally and the energy-optimal design is ruled out"
        )
        doc["assumption"] = {"holds": False}
    else:
        report = check_full_row_rank_everywhere(dsys, tol)
        doc["assumption"] = report.to_doc()

    z = _opt(args, config, "z", None)
    z = frobenius_optimal_z(dsys) if z is None else float(z)
    doc["z"] = z
    if targets is not None:
        # unperturbed baseline on the design-view pencil
        baseline = view_protected_entries(sys_, targets, z, tol=tol)
        doc["baseline_protection"] = baseline.to_doc()

    _emit_report(doc, args.out)
    return EXIT_OK


def _protection_exit(result, targets):
    if targets is None:
        return EXIT_OK
    if result.protection is not None and result.protection.all_protected:
        return EXIT_OK
    return EXIT_PROTECTION


def _write_design_artifacts(out_dir, result, report_doc):
    k_path = os.path.join(out_dir, "K.json")
    save_perturbation(k_path, result.perturbation)
    report_path = os.path.join(out_dir, "design.json")
    atomic_write_text(report_path, dumps_canonical(report_doc, digits=12))
    print(f"wrote {k_path}")
    print(f"wrote {report_path}")


def _design_l2(args, config, sys_, rel, targets, out_dir, seed, tol):
    z = _opt(args, config, "z", None)
    z = None if z is None else float(z)
    rho_text = _opt(args, config, "rho", None)
    if rho_text is None:
        rho_text = "auto" if targets is not None else None
    if rho_text is None:
        print("error: l2 mode needs --rho N, or --targets for auto-tuning",
              file=sys.stderr)
        return EXIT_INPUT

    if str(rho_text) == "auto":
        if targets is None:
            print("error: --rho auto needs --targets to aim for",
                  file=sys.stderr)
            return EXIT_INPUT
        tune = tune_rho(sys_, targets, rel=rel, z=z, tol=tol,
                        protection_seed=seed)
        doc = {"mode": "l2", "status": tune.reason, "tune": tune.to_doc()}
        _write_design_artifacts(out_dir, tune.result, doc)
        csv_path = os.path.join(out_dir, "tune.csv")
        atomic_write_text(csv_path, tune_csv(tune))
        print(f"wrote {csv_path}")
        print(f"rho {tune.rho}: {tune.reason}, "
              f"{tune.protected_count} entries protected")
        if tune.reason == "all_protected":
            return EXIT_OK
        return EXIT_PROTECTION

    rho = int(rho_text)
    try:
        result = svd_design(sys_, rho, rel=rel, z=z, targets=targets,
                            tol=tol, protection_seed=seed)
    except InfeasibleRankTargetError as exc:
        floor = rank_floor(sys_, rel, tol)
        msg = (f"rank target {rho} rejected: a target is feasible "
               f"if and only if it is at least {floor}")
        doc = {"mode": "l2", "status": "infeasible_rank_target",
               "requested_rho": rho, "floor": floor,
               "message": msg, "detail": str(exc)}
        report_path = os.path.join(out_dir, "design.json")
        atomic_write_text(report_path, dumps_canonical(doc, digits=12))
        print(f"wrote {report_path}")
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_PROTECTION
    status = "designed" if targets is None else (
        "all_protected" if result.protection.all_protected
        else "protection_incomplete"
    )
    doc = {"mode": "l2", "status": status, "result": result.to_doc()}
    _write_design_artifacts(out_dir, result, doc)
    print(f"rho {rho}: pencil rank {result.pencil_rank}, "
          f"gain {result.l2_gain:.6g}")
    return _protection_exit(result, targets)


def _design_l0(args, config, sys_, rel, targets, out_dir, seed, tol):
    eps = float(_opt(args, config, "eps", 0.1))
    sdp_tol = float(_opt(args, config, "sdp_tol", 1e-7))
    sdp_max_iters = int(_opt(args, config, "sdp_max_iters", 200))
    grid_text = _opt(args, config, "c_grid", None)

    if grid_text is not None:
        grid = [float(tok) for tok in str(grid_text).split(",") if tok.strip()]
        if not grid:
            raise ValueError(f"empty --c-grid {grid_text!r}")
        jobs = int(_opt(args, config, "jobs", 1))
        rows = sweep_c(sys_, targets, grid, eps=eps, rel=rel, seed=seed,
                       jobs=jobs, tol=tol, sdp_tol=sdp_tol,
                       sdp_max_iters=sdp_max_iters)
        csv_path = os.path.join(out_dir, "sweep.csv")
        atomic_write_text(csv_path, sweep_csv(rows))
        print(f"wrote {csv_path}")
        row_docs = []
        for row in rows:
            row_docs.append({
                "c": row.c,
                "pencil_rank": row.pencil_rank,
                "l0_count": row.l0_count,
                "l1_value": row.l1_value,
                "nuclear_value": row.nuclear_value,
                "controllable": row.controllable,
                "all_protected": row.all_protected,
                "solve_seconds": row.solve_seconds,
                "error": row.error,
            })
            if row.result is not None:
                k_path = os.path.join(out_dir, f"K_c{row.c:g}.json")
                save_perturbation(k_path, row.result.perturbation)
                print(f"wrote {k_path}")
        solved = [row for row in rows if row.result is not None]
        status = "swept" if solved else "all_solves_failed"
        if targets is not None and solved:
            status = ("all_protected"
                      if any(row.all_protected for row in solved)
                      else "protection_incomplete")
        doc = {"mode": "l0", "eps": eps, "status": status, "rows": row_docs}
        report_path = os.path.join(out_dir, "design.json")
        atomic_write_text(report_path, dumps_canonical(doc, digits=12))
        print(f"wrote {report_path}")
        if not solved:
            print("error: every grid point failed to solve", file=sys.stderr)
            return EXIT_SOLVER
        if targets is None:
            return EXIT_OK
        return EXIT_OK if status == "all_protected" else EXIT_PROTECTION

    c = float(_opt(args, config, "c", 1.0))
    cfg = L0DesignConfig(c=c, eps=eps, tol=tol, sdp_tol=sdp_tol,
                         sdp_max_iters=sdp_max_iters)
    result = design(sys_, targets=targets, cfg=cfg, rel=rel, seed=seed)
    status = "designed" if targets is None else (
        "all_protected" if result.protection.all_protected
        else "protection_incomplete"
    )
    doc = {"mode": "l0", "status": status, "result": result.to_doc()}
    _write_design_artifacts(out_dir, result, doc)
    print(f"c {c:g}: pencil rank {result.pencil_rank}, "
          f"{result.l0_count} nonzero entries")
    return _protection_exit(result, targets)


def _design_l2_sdp(args, config, sys_, rel, targets, out_dir, seed, tol):
    c = float(_opt(args, config, "c", 1.0))
    eps = float(_opt(args, config, "eps", 0.1))
    sdp_tol = float(_opt(args, config, "sdp_tol", 1e-7))
    sdp_max_iters = int(_opt(args, config, "sdp_max_iters", 200))
    result = sdp_gain_design(sys_, c, eps, targets=targets, rel=rel, tol=tol,
                             sdp_tol=sdp_tol, sdp_max_iters=sdp_max_iters,
                             seed=seed)
    status = "designed" if targets is None else (
        "all_protected" if result.protection.all_protected
        else "protection_incomplete"
    )
    doc = {"mode": "l2-sdp", "status": status, "result": result.to_doc()}
    _write_design_artifacts(out_dir, result, doc)
    print(f"c {c:g}: pencil rank {result.pencil_rank}, "
          f"gain {result.l2_gain:.6g}")
    return _protection_exit(result, targets)


def cmd_design(args):
    config = _load_config(args.config)
    tol = _tolerance(args, config)
    sys_, rel = load_system(args.system)
    targets = parse_targets(_opt(args, config, "targets", None))
    _validate_targets(targets, sys_)
    out_dir = str(_opt(args, config, "out_dir", "."))
    os.makedirs(out_dir, exist_ok=True)
    seed = int(_opt(args, config, "seed", 0))
    mode = args.mode
    if mode == "l2":
        return _design_l2(args, config, sys_, rel, targets, out_dir, seed, tol)
    if mode == "l0":
        return _design_l0(args, config, sys_, rel, targets, out_dir, seed, tol)
    return _design_l2_sdp(args, config, sys_, rel, targets, out_dir, seed, tol)


def cmd_simulate(args):
    config = _load_config(args.config)
    tol = _tolerance(args, config)
    sys_, rel = load_system(args.system)
    k_file = _opt(args, config, "k_file", None)
    pert = None if k_file is None else load_perturbation(k_file)
    horizon = int(_opt(args, config, "horizon", 300))
    seed = int(_opt(args, config, "seed", 0))
    setpoint = float(_opt(args, config, "setpoint", 21.5))
    occupancy_max = int(_opt(args, config, "occupancy_max", 10))
    out_dir = str(_opt(args, config, "out_dir", "."))
    os.makedirs(out_dir, exist_ok=True)

    report = closed_loop_sim(sys_, rel, pert, setpoint=setpoint,
                             horizon=horizon, occupancy_max=occupancy_max,
                             seed=seed, tol=tol)
    sim_path = os.path.join(out_dir, "sim.csv")
    atomic_write_text(sim_path, sim_csv(report))
    print(f"wrote {sim_path}")

    burn_in = min(10, horizon)
    tail = report.relative_series[burn_in:]
    finite_tail = tail[np.isfinite(tail)]
    summary = {
        "horizon": horizon,
        "seed": seed,
        "setpoint": setpoint,
        "occupancy_max": occupancy_max,
        "perturbation_file": k_file,
        "x_ref": report.x_ref,
        "u_ref": report.u_ref,
        "disutility": {
            "max": float(report.disutility_series.max()),
            "final": float(report.disutility_series[-1]),
            "median_after_burn_in":
                float(np.median(report.disutility_series[burn_in:])),
            "relative_max_after_burn_in":
                float(finite_tail.max()) if finite_tail.size else 0.0,
        },
    }

    dp_eps = _opt(args, config, "dp_eps", None)
    if dp_eps is not None:
        dp_delta = float(_opt(args, config, "dp_delta", 1e-4))
        sensitivity = float(_opt(args, config, "dp_sensitivity", 1.0))
        dp = dp_baseline(sys_, rel, eps_dp=float(dp_eps), delta_dp=dp_delta,
                         sensitivity=sensitivity, setpoint=setpoint,
                         horizon=horizon, occupancy_max=occupancy_max,
                         seed=seed, tol=tol)
        dp_path = os.path.join(out_dir, "dp.csv")
        atomic_write_text(dp_path, sim_csv(dp))
        print(f"wrote {dp_path}")
        summary["dp"] = {
            "eps": float(dp_eps),
            "delta": dp_delta,
            "sensitivity": sensitivity,
            "disutility_median_after_burn_in":
                float(np.median(dp.disutility_series[burn_in:])),
        }

    report_path = os.path.join(out_dir, "sim.json")
    atomic_write_text(report_path, dumps_canonical(summary, digits=12))
    print(f"wrote {report_path}")
    return EXIT_OK


def cmd_oracle(args):
    config = _load_config(args.config)
    tol = _tolerance(args, config)
    op = args.op

    if op == "nvp":
        M = _load_matrix_file(args.matrix)
        t0 = time.perf_counter()
        res = sparsest_null_vector(M, tol)
        doc = {
            "op": "nvp",
            "rows": int(M.shape[0]),
            "cols": int(M.shape[1]),
            "v_star": res.v_star,
            "sparsity": res.sparsity,
            "subsets_examined": res.subsets_examined,
            "seconds": time.perf_counter() - t0,
        }
    elif op == "zgrid":
        sys_, _ = load_system(args.system)
        lo = float(_opt(args, config, "lo", -2.0))
        hi = float(_opt(args, config, "hi", 2.0))
        step = float(_opt(args, config, "step", 1e-3))
        z_grid = grid_min_frobenius(sys_, lo, hi, step)
        z_closed = frobenius_optimal_z(sys_)
        doc = {
            "op": "zgrid",
            "lo": lo, "hi": hi, "step": step,
            "grid_minimizer": z_grid,
            "closed_form": z_closed,
            "gap": abs(z_grid - z_closed),
        }
    else:  # nuclear
        M = _load_matrix_file(args.matrix)
        sdp_tol = float(_opt(args, config, "sdp_tol", 1e-7))
        prob = nuclear_norm_problem(M)
        sol = sdp_solve(prob, tol=sdp_tol)
        kkt = kkt_report(prob, sol)
        two_nuclear = 2.0 * float(np.linalg.svd(M, compute_uv=False).sum())
        denom = max(1.0, abs(two_nuclear))
        doc = {
            "op": "nuclear",
            "status": sol.status,
            "objective": sol.objective,
            "two_nuclear_norm": two_nuclear,
            "relative_error": abs(sol.objective - two_nuclear) / denom,
            "kkt": {
                "primal_residual": kkt.primal_residual,
                "dual_residual": kkt.dual_residual,
                "duality_gap": kkt.duality_gap,
            },
        }

    _emit_report(doc, args.out)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="privperturb",
        description="Design and validate privacy perturbations for "
                    "released linear network data.",
    )
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON file with default options")
        sp.add_argument("--tol-rank", dest="tol_rank", type=float)
        sp.add_argument("--tol-zero", dest="tol_zero", type=float)

    sp = sub.add_parser("check", help="verify release requirements")
    sp.add_argument("--system", required=True, help="system JSON file")
    sp.add_argument("--targets", help='entries to protect, e.g. "x0:1,7;u:6"')
    sp.add_argument("--z", type=float, help="probe frequency")
    sp.add_argument("--out", help="write the JSON report here")
    common(sp)
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("design", help="design a perturbation")
    sp.add_argument("--system", required=True)
    sp.add_argument("--mode", required=True, choices=("l0", "l2", "l2-sdp"))
    sp.add_argument("--targets")
    sp.add_argument("--rho", help="rank target for l2, or 'auto'")
    sp.add_argument("--z", type=float)
    sp.add_argument("--c", type=float, help="sparsity/rank trade-off weight")
    sp.add_argument("--c-grid", dest="c_grid",
                    help="comma-separated c values to sweep")
    sp.add_argument("--eps", type=float, help="controllability margin")
    sp.add_argument("--sdp-tol", dest="sdp_tol", type=float)
    sp.add_argument("--sdp-max-iters", dest="sdp_max_iters", type=int)
    sp.add_argument("--jobs", type=int, help="parallel sweep workers")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out-dir", dest="out_dir")
    common(sp)
    sp.set_defaults(func=cmd_design)

    sp = sub.add_parser("simulate", help="run the thermal closed loop")
    sp.add_argument("--system", required=True)
    sp.add_argument("--k-file", dest="k_file",
                    help="perturbation JSON; omit for K = 0")
    sp.add_argument("--horizon", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--setpoint", type=float)
    sp.add_argument("--occupancy-max", dest="occupancy_max", type=int)
    sp.add_argument("--dp-eps", dest="dp_eps", type=float,
                    help="also run the additive-noise baseline")
    sp.add_argument("--dp-delta", dest="dp_delta", type=float)
    sp.add_argument("--dp-sensitivity", dest="dp_sensitivity", type=float)
    sp.add_argument("--out-dir", dest="out_dir")
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("oracle", help="slow reference computations")
    sp.add_argument("op", choices=("nvp", "zgrid", "nuclear"))
    sp.add_argument("--matrix", help="matrix JSON for nvp/nuclear")
    sp.add_argument("--system", help="system JSON for zgrid")
    sp.add_argument("--lo", type=float)
    sp.add_argument("--hi", type=float)
    sp.add_argument("--step", type=float)
    sp.add_argument("--sdp-tol", dest="sdp_tol", type=float)
    sp.add_argument("--out")
    common(sp)
    sp.set_defaults(func=cmd_oracle)

    return parser


def _setup_logging():
    level_name = os.environ.get("PRIVPERTURB_LOG", "warning").upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(
        level=level,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )


def main(argv=None):
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "oracle":
        if args.op in ("nvp", "nuclear") and not args.matrix:
            parser.error(f"oracle {args.op} needs --matrix")
        if args.op == "zgrid" and not args.system:
            parser.error("oracle zgrid needs --system")
    try:
        return args.func(args)
    except (SolverFailureError, SvdConvergenceError) as exc:
        log.debug("solver failure", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ProtectionNotAchievableError, InfeasibleRankTargetError,
            AssumptionViolationError) as exc:
        log.debug("protection not achievable", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PROTECTION
    except PrivPerturbError as exc:
        log.debug("input rejected", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (OSError, ValueError, TypeError, KeyError) as exc:
        log.debug("input rejected", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
