"""Result containers shared by the perturbation design routines."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["DesignResult", "TuneResult", "sparsity_threshold"]


def sparsity_threshold(K):
    """Magnitude below which a designed entry counts as zero.

    Relative to the Frobenius norm but floored at an absolute scale, so a
    design that is genuinely zero reports a zero count.
    """
    K = np.asarray(K, dtype=float)
    return 1e-6 * max(1.0, float(np.linalg.norm(K, "fro")))


@dataclass(frozen=True, eq=False)
class DesignResult:
    """Outcome of one perturbation design.

    ``pencil_rank`` is the rank of the (design-view) perturbed pencil at
    the design frequency ``z``.  ``l0_count`` counts entries of the full
    embedded perturbation above :func:`sparsity_threshold`; ``l2_gain``
    is the spectral norm of the perturbation as seen in the released
    output channel.  ``protection`` is present when targets were supplied,
    ``controllability`` always refers to the perturbed pair restricted to
    the controller-driven columns (all columns without a partition).
    ``diagnostics`` carries method-specific detail (singular values,
    solver statistics, bounds).
    """

    method: str
    perturbation: object
    z: float
    pencil_rank: int
    l0_count: int
    l2_gain: float
    controllability: object
    protection: object = None
    solve_seconds: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    def to_doc(self):
        from .serialize import perturbation_to_doc

        doc = {
            "method": self.method,
            "z": self.z,
            "pencil_rank": self.pencil_rank,
            "l0_count": self.l0_count,
            "l2_gain": self.l2_gain,
            "solve_seconds": self.solve_seconds,
            "perturbation": perturbation_to_doc(self.perturbation),
            "controllability": self.controllability.to_doc(),
            "diagnostics": self.diagnostics,
        }
        if self.protection is not None:
            doc["protection"] = self.protection.to_doc()
        return doc


@dataclass(frozen=True, eq=False)
class TuneResult:
    """Outcome of the descending rank-target search.

    ``reason`` is ``"all_protected"`` when every requested entry was
    covered, else ``"exhausted_floor"`` with the best coverage found.
    ``trajectory`` records one row per attempted target.
    """

    result: DesignResult
    rho: int
    reason: str
    protected_count: int
    trajectory: list = field(default_factory=list)

    def to_doc(self):
        return {
            "rho": self.rho,
            "reason": self.reason,
            "protected_count": self.protected_count,
            "trajectory": self.trajectory,
            "result": self.result.to_doc(),
        }
