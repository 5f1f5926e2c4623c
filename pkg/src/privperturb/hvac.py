"""Building thermal network case study.

A set of zones exchanges heat through shared walls; each zone is served by
a constant-mass-flow air supply whose temperature is the control input,
while occupancy acts as an exogenous heat load.  The discrete-time zone
model is

    den_i * T_i(k+1) = (L_i/dt - m_i c_p / 2 - sum_j R_ij / 2) T_i(k)
                       + sum_j R_ij T_j(k) + m_i c_p T_i^sup(k) + c_o V_i(k)

with den_i = L_i/dt + m_i c_p / 2 + sum_j R_ij / 2, giving a stable
nonnegative state matrix and diagonal input maps for both channels.

:func:`build_hvac` wraps the physics into a :class:`~.system.LinearSystem`
with the supply inputs marked as controller-driven and randomly drawn
released-output maps.  :func:`closed_loop_sim` stabilizes the perturbed
system with a discrete LQR around a temperature setpoint, drives it with
integer occupancy noise, and releases both the perturbed and the
would-be-unperturbed outputs from the same run so their gap (the
disutility) can be measured.  :func:`dp_baseline` releases the same run
through an output-noise Gaussian mechanism instead, for comparison.

Perturbation signals are formed from deviations around the operating
point, so they shrink as the loop settles and vanish at the equilibrium;
the released data stream stays close to the true one precisely when the
building is well regulated.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from importlib import resources

import numpy as np
import scipy.linalg

from .controllability import is_controllable
from .errors import (
    AssumptionViolationError,
    DimensionError,
    SteadyStateError,
)
from .linalg import DEFAULT_TOL
from .privacy import check_full_row_rank_everywhere
from .system import (
    LinearSystem,
    Perturbation,
    ReleaseMap,
    apply_perturbation,
    embed_design_perturbation,
    exogenous_design_view,
)

__all__ = [
    "ZoneParams",
    "SimReport",
    "SIM_COLUMNS",
    "build_hvac",
    "closed_loop_sim",
    "dp_baseline",
    "disutility",
    "sim_csv",
]

_DEFAULTS = json.loads(
    resources.files("privperturb").joinpath("data/hvac_defaults.json").read_text()
)

# LQR weights for the stabilizing supply-temperature controller; the
# regulated pair is always controllable, so the gain always exists.
LQR_STATE_WEIGHT = 1.0
LQR_INPUT_WEIGHT = 0.1

_GH_ATTEMPTS = 20


def _path_edges(n_zones):
    return tuple((i, i + 1) for i in range(n_zones - 1))


@dataclass(frozen=True, eq=False)
class ZoneParams:
    """Physical parameters of the zone network.

    Scalar values broadcast over all zones (``capacity``, ``supply_flow``)
    or all walls (``conductance``); per-zone sequences and per-edge
    mappings override individual values.  Defaults ship in
    ``data/hvac_defaults.json`` and describe a ten-zone corridor: zones in
    a row, each sharing a wall with its neighbors.

    Attributes
    ----------
    n_zones : int
    capacity : float or sequence
        Zone thermal capacity, J/K.
    conductance : float or mapping
        Wall thermal conductance, W/K; a mapping is keyed by adjacency
        pairs ``(i, j)`` with i < j.
    stepsize : float
        Discretization step, s.
    occupant_load : float
        Heat emitted per occupant, W.
    air_heat_capacity : float
        Specific heat of supply air, J/(kg K).
    supply_flow : float or sequence
        Constant supply mass flow rate per zone, kg/s.
    adjacency : tuple of (int, int), optional
        Undirected shared-wall pairs, 0-based; ``None`` selects the
        corridor (path) layout.
    """

    n_zones: int = _DEFAULTS["n_zones"]
    capacity: object = _DEFAULTS["capacity"]
    conductance: object = _DEFAULTS["conductance"]
    stepsize: float = _DEFAULTS["stepsize"]
    occupant_load: float = _DEFAULTS["occupant_load"]
    air_heat_capacity: float = _DEFAULTS["air_heat_capacity"]
    supply_flow: object = _DEFAULTS["supply_flow"]
    adjacency: tuple = None

    def __post_init__(self):
        n = int(self.n_zones)
        if n < 1:
            raise ValueError(f"n_zones must be at least 1, got {self.n_zones}")
        object.__setattr__(self, "n_zones", n)
        if self.adjacency is None:
            edges = _path_edges(n)
        else:
            edges = []
            for pair in self.adjacency:
                i, j = (int(pair[0]), int(pair[1]))
                if i == j:
                    raise ValueError(f"zone {i} cannot share a wall with itself")
                if not (0 <= i < n and 0 <= j < n):
                    raise ValueError(f"adjacency pair {(i, j)} out of range")
                edges.append((min(i, j), max(i, j)))
            if len(set(edges)) != len(edges):
                raise ValueError("adjacency lists a wall twice")
            edges = tuple(sorted(edges))
        object.__setattr__(self, "adjacency", edges)

        for name in ("stepsize", "occupant_load", "air_heat_capacity"):
            value = float(getattr(self, name))
            if not value > 0.0:
                raise ValueError(f"{name} must be positive, got {value}")
            object.__setattr__(self, name, value)
        for name in ("capacity", "supply_flow"):
            if np.any(np.asarray(self._per_zone(name)) <= 0.0):
                raise ValueError(f"{name} values must be positive")
        if isinstance(self.conductance, dict):
            normalized = {}
            for pair, value in self.conductance.items():
                key = (min(int(pair[0]), int(pair[1])),
                       max(int(pair[0]), int(pair[1])))
                if key not in edges:
                    raise ValueError(
                        f"conductance given for non-adjacent pair {key}"
                    )
                normalized[key] = float(value)
            object.__setattr__(self, "conductance", normalized)
            values = list(normalized.values())
        else:
            values = [float(self.conductance)]
        if any(not v > 0.0 for v in values):
            raise ValueError("conductance values must be positive")

    def _per_zone(self, name):
        value = getattr(self, name)
        if np.isscalar(value):
            return np.full(self.n_zones, float(value))
        arr = np.asarray(value, dtype=float).reshape(-1)
        if arr.size != self.n_zones:
            raise ValueError(
                f"{name} must be scalar or length {self.n_zones}, got {arr.size}"
            )
        return arr

    def neighbors(self, i):
        """Zones sharing a wall with zone ``i``."""
        return tuple(
            b if a == i else a for a, b in self.adjacency if i in (a, b)
        )

    def edge_conductance(self, i, j):
        key = (min(i, j), max(i, j))
        if key not in self.adjacency:
            raise ValueError(f"zones {i} and {j} share no wall")
        if isinstance(self.conductance, dict):
            return self.conductance.get(key, _DEFAULTS["conductance"])
        return float(self.conductance)

    def matrices(self):
        """State and input maps ``(A, B_occupancy, B_supply)``.

        Rows follow the zone balance: den_i scales the whole row, the
        diagonal carries what the zone keeps, neighbors contribute their
        wall conductance, and both input maps are diagonal.
        """
        n = self.n_zones
        cap = self._per_zone("capacity")
        flow = self._per_zone("supply_flow")
        c_p = self.air_heat_capacity
        A = np.zeros((n, n))
        B_occ = np.zeros((n, n))
        B_sup = np.zeros((n, n))
        for i in range(n):
            wall_sum = sum(self.edge_conductance(i, j) for j in self.neighbors(i))
            den = cap[i] / self.stepsize + flow[i] * c_p / 2.0 + wall_sum / 2.0
            A[i, i] = (cap[i] / self.stepsize - flow[i] * c_p / 2.0
                       - wall_sum / 2.0) / den
            for j in self.neighbors(i):
                A[i, j] = self.edge_conductance(i, j) / den
            B_occ[i, i] = self.occupant_load / den
            B_sup[i, i] = flow[i] * c_p / den
        return A, B_occ, B_sup

    def to_config(self):
        """JSON-ready mapping with every field, arrays as lists."""
        doc = {"n_zones": self.n_zones}
        for name in ("capacity", "supply_flow"):
            value = getattr(self, name)
            doc[name] = float(value) if np.isscalar(value) else \
                [float(v) for v in np.asarray(value).reshape(-1)]
        if isinstance(self.conductance, dict):
            doc["conductance"] = [
                [i, j, v] for (i, j), v in sorted(self.conductance.items())
            ]
        else:
            doc["conductance"] = float(self.conductance)
        doc["stepsize"] = self.stepsize
        doc["occupant_load"] = self.occupant_load
        doc["air_heat_capacity"] = self.air_heat_capacity
        doc["adjacency"] = [[i, j] for i, j in self.adjacency]
        return doc

    @classmethod
    def from_config(cls, source):
        """Build from a mapping or a JSON file path."""
        if isinstance(source, (str, bytes)) or hasattr(source, "read_text"):
            doc = json.loads(
                source.read_text() if hasattr(source, "read_text")
                else open(source).read()
            )
        else:
            doc = dict(source)
        known = {
            "n_zones", "capacity", "conductance", "stepsize",
            "occupant_load", "air_heat_capacity", "supply_flow", "adjacency",
        }
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown ZoneParams fields: {sorted(unknown)}")
        kwargs = dict(doc)
        if isinstance(kwargs.get("conductance"), list):
            kwargs["conductance"] = {
                (int(i), int(j)): float(v) for i, j, v in kwargs["conductance"]
            }
        if kwargs.get("adjacency") is not None:
            kwargs["adjacency"] = tuple(
                (int(i), int(j)) for i, j in kwargs["adjacency"]
            )
        return cls(**kwargs)


def build_hvac(params=None, outputs="exogenous", seed=0, G=None, H=None,
               tol=DEFAULT_TOL):
    """Assemble the zone network as a released linear system.

    Occupancy inputs come first, supply-temperature inputs second, and the
    latter are marked controller-driven.  The released-output maps are
    drawn uniformly from [-1, 1] unless supplied explicitly.

    Parameters
    ----------
    params : ZoneParams, optional
        Defaults to the shipped ten-zone corridor.
    outputs : {"exogenous", "full"}
        ``exogenous`` releases n_zones output rows and requires the
        occupancy-channel pencil to keep full row rank at every frequency
        (the closed-form gain design depends on it); draws failing the
        check are regenerated up to 20 times.  That pencil is square, and
        a direct occupancy feedthrough would plant rank-dropping
        frequencies in it no matter the draw, so the occupancy block of H
        is zero on this variant: occupancy reaches the release only
        through the zone temperatures.  ``full`` releases 2 * n_zones
        rows, all maps random, with no rank requirement: losing rank is
        the design objective on that variant, not a precondition.
    seed : int
        Drives the output-map draws only.
    G, H : array_like, optional
        Explicit released-output maps; both must be given together, and a
        failed rank check is then an immediate error.

    Returns
    -------
    (LinearSystem, ReleaseMap)
        The release map is the identity: every raw signal is released.
    """
    if params is None:
        params = ZoneParams()
    if outputs not in ("exogenous", "full"):
        raise ValueError(f"outputs must be 'exogenous' or 'full', got {outputs!r}")
    if (G is None) != (H is None):
        raise ValueError("supply G and H together or neither")
    n = params.n_zones
    A, B_occ, B_sup = params.matrices()
    B = np.hstack([B_occ, B_sup])
    ctrl = tuple(range(n, 2 * n))
    q = n if outputs == "exogenous" else 2 * n

    rng = np.random.default_rng(seed)
    supplied = G is not None
    for _ in range(_GH_ATTEMPTS):
        if not supplied:
            G = rng.uniform(-1.0, 1.0, size=(q, n))
            H = rng.uniform(-1.0, 1.0, size=(q, 2 * n))
            if outputs == "exogenous":
                # zero occupancy feedthrough; see the parameter docs
                H[:, :n] = 0.0
        sys = LinearSystem(A, B, G, H, control_inputs=ctrl)
        if outputs == "full":
            break
        dsys, _ = exogenous_design_view(sys)
        report = check_full_row_rank_everywhere(dsys, tol)
        if report.holds:
            break
        if supplied:
            raise AssumptionViolationError(
                "supplied output maps lose pencil row rank at "
                f"z={report.invariant_zeros}"
            )
    else:
        raise AssumptionViolationError(
            f"no admissible output maps in {_GH_ATTEMPTS} draws (seed {seed}): "
            "the occupancy-channel pencil keeps losing row rank"
        )
    return sys, ReleaseMap.identity(sys)


@dataclass(frozen=True, eq=False)
class SimReport:
    """Closed-loop run with true and released output paths.

    ``y_true`` is what an unperturbed release would have produced on the
    realized states and inputs; ``y_pert`` is the released stream; ``y_dp``
    is set only by :func:`dp_baseline`.  ``disutility_series`` holds the
    per-step distance between the released and true outputs (released =
    ``y_dp`` when present, else ``y_pert``), ``relative_series`` its ratio
    to ``||y_true(k)||`` with ``inf`` marking near-zero true samples.
    States and inputs are recorded so every released sample can be
    recomputed from the run.
    """

    y_true: np.ndarray
    y_pert: np.ndarray
    disutility_series: np.ndarray
    relative_series: np.ndarray
    temperatures: np.ndarray
    inputs: np.ndarray
    x_ref: np.ndarray
    u_ref: np.ndarray
    seed: int
    y_dp: np.ndarray = None

    def __post_init__(self):
        for name in ("y_true", "y_pert", "disutility_series",
                     "relative_series", "temperatures", "inputs",
                     "x_ref", "u_ref"):
            object.__setattr__(
                self, name, np.asarray(getattr(self, name), dtype=float)
            )
        if self.y_dp is not None:
            object.__setattr__(self, "y_dp", np.asarray(self.y_dp, dtype=float))
            if self.y_dp.shape != self.y_true.shape:
                raise DimensionError(
                    f"y_dp shape {self.y_dp.shape} != y_true {self.y_true.shape}"
                )
        steps = self.y_true.shape[0]
        for name in ("y_pert", "disutility_series", "relative_series",
                     "temperatures", "inputs"):
            if getattr(self, name).shape[0] != steps:
                raise DimensionError(
                    f"{name} has {getattr(self, name).shape[0]} samples, "
                    f"expected {steps}"
                )
        finite = [self.y_true, self.y_pert, self.disutility_series,
                  self.temperatures, self.inputs, self.x_ref, self.u_ref]
        if self.y_dp is not None:
            finite.append(self.y_dp)
        if any(not np.all(np.isfinite(arr)) for arr in finite):
            raise ValueError("simulation produced non-finite values")
        # relative ratios may carry the inf marker but never nan
        if np.any(np.isnan(self.relative_series)):
            raise ValueError("relative series contains nan")

    @property
    def horizon(self):
        return self.y_true.shape[0] - 1


def disutility(y_pert, y_true, tol=DEFAULT_TOL):
    """Per-step release error and its size relative to the true output.

    Returns ``(series, relative)`` where ``series[k]`` is the Euclidean
    distance between the released and true samples at step k and
    ``relative[k]`` divides by ``||y_true(k)||``.  A deviation over a
    numerically zero true sample is reported as ``inf``; if both vanish
    the ratio is 0.
    """
    y_pert = np.atleast_2d(np.asarray(y_pert, dtype=float))
    y_true = np.atleast_2d(np.asarray(y_true, dtype=float))
    if y_pert.shape != y_true.shape:
        raise DimensionError(
            f"trajectories differ in shape: {y_pert.shape} vs {y_true.shape}"
        )
    series = np.linalg.norm(y_pert - y_true, axis=1)
    base = np.linalg.norm(y_true, axis=1)
    near_zero = base < tol.zero_tol
    marker = np.where(series < tol.zero_tol, 0.0, np.inf)
    relative = np.where(
        near_zero, marker, series / np.where(near_zero, 1.0, base)
    )
    return series, relative


def _lqr_gain(A, B):
    n = A.shape[0]
    m = B.shape[1]
    Q = LQR_STATE_WEIGHT * np.eye(n)
    R = LQR_INPUT_WEIGHT * np.eye(m)
    P = scipy.linalg.solve_discrete_are(A, B, Q, R)
    return np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)


def closed_loop_sim(sys, rel=None, pert=None, setpoint=21.5, horizon=300,
                    occupancy_max=10, seed=0, x0=None, tol=DEFAULT_TOL):
    """Regulate the perturbed system at a setpoint under occupancy noise.

    The supply-temperature channel runs a discrete LQR designed on the
    perturbed pair; occupancy is an integer drawn uniformly from
    {0, ..., occupancy_max} at every step.  The operating point
    ``(x_ref, u_ref)`` solves the nominal steady-state equations at the
    setpoint under mean occupancy, perturbation signals are formed from
    deviations around it, and the physical input perturbation feeds back
    into the state update.  Both output paths are evaluated on this one
    realization.

    Parameters
    ----------
    sys : LinearSystem
        Must carry an input partition; the control channel is what the
        regulator actuates.
    rel : ReleaseMap, optional
    pert : Perturbation, optional
        Zero when omitted.  A perturbation sized for the exogenous view
        is lifted to full size automatically.
    x0 : array_like, optional
        Initial temperatures, default all zero (a cold start well below
        any realistic setpoint, so the transient is visible).

    Returns
    -------
    SimReport
    """
    if sys.control_inputs is None:
        raise AssumptionViolationError(
            "closed-loop simulation needs an input partition: no input is "
            "marked controller-driven"
        )
    horizon = int(horizon)
    if horizon < 1:
        raise ValueError(f"horizon must be at least 1, got {horizon}")
    occupancy_max = int(occupancy_max)
    if occupancy_max < 0:
        raise ValueError(f"occupancy_max must be >= 0, got {occupancy_max}")
    if rel is None:
        rel = ReleaseMap.identity(sys)
    rel.check_consistent(sys)
    n, p = sys.n, sys.p
    exo = list(sys.exogenous_inputs)
    ctrl = list(sys.control_inputs)

    if pert is None:
        pert = Perturbation.zero(n, p, rel.l)
    elif pert.p != p:
        pert = embed_design_perturbation(sys, pert)
    perturbed = apply_perturbation(sys, pert, rel)

    verdict = is_controllable(perturbed.A, perturbed.B[:, ctrl], tol)
    if not verdict.controllable:
        raise AssumptionViolationError(
            "perturbed pair is uncontrollable through the control channel "
            f"(reachability rank {verdict.rank} of {n}); refusing to design "
            "a regulator for it"
        )

    # Operating point of the nominal loop: deviations (and with them the
    # perturbation signals) vanish there, so the nominal and perturbed
    # dynamics agree at the reference.
    x_ref = np.full(n, float(setpoint))
    mean_occ = np.full(len(exo), occupancy_max / 2.0)
    B_c = sys.B[:, ctrl]
    rhs = (np.eye(n) - sys.A) @ x_ref - sys.B[:, exo] @ mean_occ
    u_ref_c, _, b_rank, _ = np.linalg.lstsq(B_c, rhs, rcond=None)
    gap = np.linalg.norm(B_c @ u_ref_c - rhs)
    if gap > 1e-9 * (1.0 + np.linalg.norm(rhs)):
        raise SteadyStateError(
            "control channel cannot hold the setpoint: its input map has "
            f"rank {b_rank} of {n} and misses the required steady heat "
            f"flow by {gap:.3e}"
        )
    u_ref = np.empty(p)
    u_ref[exo] = mean_occ
    u_ref[ctrl] = u_ref_c

    gain = _lqr_gain(perturbed.A, perturbed.B[:, ctrl])

    if x0 is None:
        x = np.zeros(n)
    else:
        x = np.asarray(x0, dtype=float).reshape(-1)
        if x.size != n:
            raise DimensionError(f"x0 has size {x.size}, expected {n}")
        x = x.copy()

    # child 0 feeds occupancy; child 1 is reserved for the output-noise
    # baseline so both entry points see the same occupancy stream per seed
    occ_rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(2)[0])
    occupancy = occ_rng.integers(
        0, occupancy_max + 1, size=(horizon + 1, len(exo))
    ).astype(float)

    X = np.empty((horizon + 1, n))
    U = np.empty((horizon + 1, p))
    Y_true = np.empty((horizon + 1, sys.q))
    Y_pert = np.empty((horizon + 1, sys.q))
    for k in range(horizon + 1):
        u = np.empty(p)
        u[exo] = occupancy[k]
        u[ctrl] = u_ref_c - gain @ (x - x_ref)
        dx = x - x_ref
        du = u - u_ref
        mu_u = pert.k_ss @ dx + pert.k_si @ du
        mu_y = pert.k_os @ dx + pert.k_oi @ du
        X[k] = x
        U[k] = u
        Y_true[k] = sys.G @ x + sys.H @ u
        Y_pert[k] = Y_true[k] + sys.H @ mu_u + rel.pi @ mu_y
        x = sys.A @ x + sys.B @ (u + mu_u)

    series, relative = disutility(Y_pert, Y_true, tol)
    return SimReport(
        y_true=Y_true,
        y_pert=Y_pert,
        disutility_series=series,
        relative_series=relative,
        temperatures=X,
        inputs=U,
        x_ref=x_ref,
        u_ref=u_ref,
        seed=int(seed),
    )


def dp_baseline(sys, rel=None, eps_dp=0.1, delta_dp=1e-4, sensitivity=1.0,
                setpoint=21.5, horizon=300, occupancy_max=10, seed=0,
                x0=None, tol=DEFAULT_TOL):
    """Release the unperturbed run through a Gaussian output mechanism.

    Runs the closed loop with a zero perturbation (the same occupancy
    realization as :func:`closed_loop_sim` at this seed) and adds i.i.d.
    noise with sigma = sensitivity * sqrt(2 ln(1.25/delta)) / eps to every
    released sample.  The report's disutility series measures the noisy
    release against the true output.
    """
    if not eps_dp > 0.0:
        raise ValueError(f"eps_dp must be positive, got {eps_dp}")
    if not 0.0 < delta_dp < 1.0:
        raise ValueError(f"delta_dp must be in (0, 1), got {delta_dp}")
    if not sensitivity > 0.0:
        raise ValueError(f"sensitivity must be positive, got {sensitivity}")
    base = closed_loop_sim(
        sys, rel, None, setpoint=setpoint, horizon=horizon,
        occupancy_max=occupancy_max, seed=seed, x0=x0, tol=tol,
    )
    sigma = sensitivity * math.sqrt(2.0 * math.log(1.25 / delta_dp)) / eps_dp
    noise_rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(2)[1])
    y_dp = base.y_true + sigma * noise_rng.standard_normal(base.y_true.shape)
    series, relative = disutility(y_dp, base.y_true, tol)
    return SimReport(
        y_true=base.y_true,
        y_pert=base.y_pert,
        disutility_series=series,
        relative_series=relative,
        temperatures=base.temperatures,
        inputs=base.inputs,
        x_ref=base.x_ref,
        u_ref=base.u_ref,
        seed=int(seed),
        y_dp=y_dp,
    )


SIM_COLUMNS = ("k", "disutility", "relative", "y_true_norm", "y_pert_norm")


def sim_csv(report):
    """Render a report as CSV with one row per step.

    Columns: k, disutility, relative, y_true_norm, y_pert_norm, then one
    temperature column per zone.
    """
    n = report.temperatures.shape[1]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(list(SIM_COLUMNS) + [f"temp_{i}" for i in range(n)])
    true_norm = np.linalg.norm(report.y_true, axis=1)
    pert_norm = np.linalg.norm(report.y_pert, axis=1)
    for k in range(report.y_true.shape[0]):
        row = [
            str(k),
            format(report.disutility_series[k], ".12g"),
            format(report.relative_series[k], ".12g"),
            format(true_norm[k], ".12g"),
            format(pert_norm[k], ".12g"),
        ]
        row.extend(format(t, ".12g") for t in report.temperatures[k])
        writer.writerow(row)
    return buf.getvalue()
