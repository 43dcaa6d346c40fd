"""Numerical tolerances, fixed in one read-only record for reproducibility."""

from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    hermitian: float = 1e-12
    projector: float = 1e-10
    involution: float = 1e-10
    unit_norm: float = 1e-12
    trace: float = 1e-12
    psd_floor: float = -1e-10
    branch_sum: float = 1e-9
    prune_probability: float = 1e-14
    commuting: float = 1e-12
    order_symmetry: float = 1e-10
    audit_probability: float = 1e-12
    exact_verdict: float = 1e-9


TOL = Tolerances()

MAX_SEQUENCE_LENGTH = 12
