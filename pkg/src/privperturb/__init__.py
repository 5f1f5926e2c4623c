"""Privacy-preserving release of linear network data via designed perturbations.

The package builds small additive input and output perturbations for a
discrete-time linear system so that released trajectories no longer
pin down protected initial states or input channels, while the closed
loop keeps operating near its setpoint.  Designs come in two flavors:
a closed-form SVD construction that minimizes perturbation energy at a
chosen pencil rank, and a sparsity-seeking semidefinite relaxation
that trades rank against the number of touched channels.
"""

from .controllability import (
    ControllabilityVerdict,
    controllability_matrix,
    is_controllable,
    perturbed_pair_controllable,
    symmetric_psd_certificate,
)
from .design_l0 import (
    SWEEP_COLUMNS,
    L0DesignConfig,
    SweepRow,
    design,
    solved_rank_cutoff,
    sweep_c,
    sweep_csv,
)
from .design_l2 import (
    TUNE_COLUMNS,
    frobenius_optimal_z,
    gain_upper_bound,
    rank_floor,
    sdp_gain_design,
    svd_design,
    tune_csv,
    tune_rho,
)
from .errors import (
    AssumptionViolationError,
    DimensionError,
    InfeasibleRankTargetError,
    PrivPerturbError,
    ProtectionNotAchievableError,
    SizeLimitError,
    SolverFailureError,
    SteadyStateError,
    SvdConvergenceError,
)
from .hvac import (
    SIM_COLUMNS,
    SimReport,
    ZoneParams,
    build_hvac,
    closed_loop_sim,
    disutility,
    dp_baseline,
    sim_csv,
)
from .linalg import DEFAULT_TOL, Tolerance
from .privacy import (
    AssumptionReport,
    ProtectionReport,
    TargetSpec,
    check_full_row_rank_everywhere,
    design_view_targets,
    min_protected_count,
    output_invariance_witness_test,
    protected_entries,
    view_protected_entries,
)
from .results import DesignResult, TuneResult, sparsity_threshold
from .serialize import (
    load_perturbation,
    load_system,
    save_perturbation,
    save_system,
)
from .system import (
    LinearSystem,
    Perturbation,
    ReleaseMap,
    Trajectory,
    apply_perturbation,
    embed_design_perturbation,
    exogenous_design_view,
    f_matrix,
    pencil,
    simulate,
)

__version__ = "0.1.0"

__all__ = [
    "AssumptionReport",
    "AssumptionViolationError",
    "ControllabilityVerdict",
    "DEFAULT_TOL",
    "DesignResult",
    "DimensionError",
    "InfeasibleRankTargetError",
    "L0DesignConfig",
    "LinearSystem",
    "Perturbation",
    "PrivPerturbError",
    "ProtectionNotAchievableError",
    "ProtectionReport",
    "ReleaseMap",
    "SIM_COLUMNS",
    "SWEEP_COLUMNS",
    "SimReport",
    "SizeLimitError",
    "SolverFailureError",
    "SteadyStateError",
    "SvdConvergenceError",
    "SweepRow",
    "TUNE_COLUMNS",
    "TargetSpec",
    "Tolerance",
    "Trajectory",
    "TuneResult",
    "ZoneParams",
    "apply_perturbation",
    "build_hvac",
    "check_full_row_rank_everywhere",
    "closed_loop_sim",
    "controllability_matrix",
    "design",
    "design_view_targets",
    "disutility",
    "dp_baseline",
    "embed_design_perturbation",
    "exogenous_design_view",
    "f_matrix",
    "frobenius_optimal_z",
    "gain_upper_bound",
    "is_controllable",
    "load_perturbation",
    "load_system",
    "min_protected_count",
    "output_invariance_witness_test",
    "pencil",
    "perturbed_pair_controllable",
    "protected_entries",
    "rank_floor",
    "save_perturbation",
    "save_system",
    "sdp_gain_design",
    "sim_csv",
    "simulate",
    "solved_rank_cutoff",
    "sparsity_threshold",
    "svd_design",
    "sweep_c",
    "sweep_csv",
    "tune_csv",
    "tune_rho",
    "view_protected_entries",
    "__version__",
]
