"""Exact and sampled quantum mechanics of sequential dichotomic measurements.

States live on small finite-dimensional spaces (dim <= 16). Every observable
is a two-outcome measurement stored through its +1 eigenspace projector, and
the post-measurement state follows the projected-and-renormalized update
rule. Whole sequences are evaluated either exactly, by enumerating every
outcome path into a branch table, or by seeded Monte Carlo sampling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    PositionOutOfRange,
    SequenceTooLong,
    UnknownLabel,
    ZeroProbabilityBranch,
)
from .tolerances import MAX_SEQUENCE_LENGTH, TOL


def is_hermitian(matrix: np.ndarray, tol: float = TOL.hermitian) -> bool:
    return bool(np.max(np.abs(matrix - matrix.conj().T)) <= tol)


def is_projector(matrix: np.ndarray, tol: float = TOL.projector) -> bool:
    return bool(np.max(np.abs(matrix @ matrix - matrix)) <= tol)


def commutator_norm(a: np.ndarray, b: np.ndarray) -> float:
    """Max-entry magnitude of [a, b]."""
    return float(np.max(np.abs(a @ b - b @ a)))


@dataclass(frozen=True)
class QuantumState:
    """A pure vector or a density matrix on a dim-dimensional space."""

    dim: int
    vector: np.ndarray | None = None
    rho: np.ndarray | None = None

    @classmethod
    def pure(cls, vector: Iterable[complex], normalize: bool = False) -> "QuantumState":
        vec = np.asarray(vector, dtype=complex).reshape(-1)
        norm = float(np.linalg.norm(vec))
        if normalize:
            if norm == 0.0:
                raise ValueError("cannot normalize the zero vector")
            vec = vec / norm
        elif abs(norm - 1.0) > TOL.unit_norm:
            raise ValueError(f"pure state is not normalized: |psi| = {norm!r}")
        vec = vec.copy()
        vec.setflags(write=False)
        return cls(dim=vec.size, vector=vec)

    @classmethod
    def mixed(cls, rho: Iterable[Iterable[complex]]) -> "QuantumState":
        mat = np.asarray(rho, dtype=complex)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ValueError("density matrix must be square")
        if abs(np.trace(mat).real - 1.0) > TOL.trace or abs(np.trace(mat).imag) > TOL.trace:
            raise ValueError(f"density matrix trace is {np.trace(mat)!r}, expected 1")
        if not is_hermitian(mat):
            raise ValueError("density matrix is not Hermitian")
        eigenvalues = np.linalg.eigvalsh(mat)
        if float(eigenvalues.min()) < TOL.psd_floor:
            raise ValueError(f"density matrix has negative eigenvalue {eigenvalues.min()!r}")
        mat = mat.copy()
        mat.setflags(write=False)
        return cls(dim=mat.shape[0], rho=mat)

    @classmethod
    def maximally_mixed(cls, dim: int) -> "QuantumState":
        return cls.mixed(np.eye(dim) / dim)

    @property
    def is_pure(self) -> bool:
        return self.vector is not None

    def density(self) -> np.ndarray:
        if self.vector is not None:
            return np.outer(self.vector, self.vector.conj())
        assert self.rho is not None
        return np.asarray(self.rho)

    def expectation(self, operator: np.ndarray) -> float:
        if self.vector is not None:
            value = np.vdot(self.vector, operator @ self.vector)
        else:
            value = np.trace(self.rho @ operator)
        return float(np.real(value))

    def overlaps(self, other: "QuantumState", tol: float = 1e-10) -> bool:
        """Phase-insensitive state equality (fidelity equal to one)."""
        if self.dim != other.dim:
            return False
        if self.vector is not None and other.vector is not None:
            return abs(abs(np.vdot(self.vector, other.vector)) - 1.0) <= tol
        return bool(np.max(np.abs(self.density() - other.density())) <= tol)


@dataclass(frozen=True)
class Observable:
    """A +/-1 valued measurement, stored as its +1 eigenspace projector."""

    label: str
    dim: int
    plus_projector: np.ndarray

    def __post_init__(self) -> None:
        proj = np.asarray(self.plus_projector, dtype=complex)
        if proj.shape != (self.dim, self.dim):
            raise DimensionMismatch(
                f"projector of {self.label!r} has shape {proj.shape}, expected {(self.dim, self.dim)}"
            )
        if not is_hermitian(proj):
            raise ValueError(f"projector of {self.label!r} is not Hermitian")
        if not is_projector(proj):
            raise ValueError(f"projector of {self.label!r} is not idempotent")
        op = 2.0 * proj - np.eye(self.dim)
        if np.max(np.abs(op @ op - np.eye(self.dim))) > TOL.involution:
            raise ValueError(f"operator of {self.label!r} does not square to the identity")
        proj = proj.copy()
        proj.setflags(write=False)
        object.__setattr__(self, "plus_projector", proj)

    @classmethod
    def from_operator(cls, label: str, operator: np.ndarray) -> "Observable":
        op = np.asarray(operator, dtype=complex)
        return cls(label=label, dim=op.shape[0], plus_projector=(op + np.eye(op.shape[0])) / 2.0)

    @property
    def operator(self) -> np.ndarray:
        return 2.0 * self.plus_projector - np.eye(self.dim)

    @property
    def minus_projector(self) -> np.ndarray:
        return np.eye(self.dim) - self.plus_projector

    def projector(self, outcome: int) -> np.ndarray:
        return self.plus_projector if outcome == 1 else self.minus_projector


@dataclass(frozen=True)
class MeasurementSequence:
    """Ordered observable labels, to be measured left to right."""

    steps: tuple[str, ...]

    def __post_init__(self) -> None:
        if not 1 <= len(self.steps) <= MAX_SEQUENCE_LENGTH:
            raise SequenceTooLong(
                f"sequence length {len(self.steps)} outside 1..{MAX_SEQUENCE_LENGTH}"
            )

    def __len__(self) -> int:
        return len(self.steps)

    def __str__(self) -> str:
        return ",".join(self.steps)

    @classmethod
    def parse(cls, text: str) -> "MeasurementSequence":
        return cls(tuple(part.strip() for part in text.split(",") if part.strip()))


SequenceLike = MeasurementSequence | Sequence[str]


def sequence_labels(seq: SequenceLike) -> tuple[str, ...]:
    if isinstance(seq, MeasurementSequence):
        return seq.steps
    labels = tuple(seq)
    if not 1 <= len(labels) <= MAX_SEQUENCE_LENGTH:
        raise SequenceTooLong(f"sequence length {len(labels)} outside 1..{MAX_SEQUENCE_LENGTH}")
    return labels


@dataclass(frozen=True)
class OutcomeRecord:
    """Per-position +/-1 results of one measured sequence."""

    sequence: tuple[str, ...]
    values: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.sequence) != len(self.values):
            raise ValueError("record length does not match sequence length")

    def product(self) -> int:
        return int(np.prod(self.values))


@dataclass(frozen=True)
class Branch:
    outcomes: tuple[int, ...]
    probability: float
    post_state: QuantumState | None


@dataclass(frozen=True)
class BranchTable:
    """Exhaustive outcome paths of a sequence with exact probabilities."""

    sequence: tuple[str, ...]
    branches: tuple[Branch, ...]

    def __post_init__(self) -> None:
        total = sum(b.probability for b in self.branches)
        if abs(total - 1.0) > TOL.branch_sum:
            raise ValueError(f"branch probabilities sum to {total!r}, expected 1")

    def probability_of(self, outcomes: Sequence[int]) -> float:
        wanted = tuple(outcomes)
        for branch in self.branches:
            if branch.outcomes == wanted:
                return branch.probability
        return 0.0

    def outcome_probabilities(self) -> dict[tuple[int, ...], float]:
        return {b.outcomes: b.probability for b in self.branches}

    def product_mean(self) -> float:
        return float(sum(b.probability * np.prod(b.outcomes) for b in self.branches))

    def marginal_mean(self, position: int) -> float:
        if not 1 <= position <= len(self.sequence):
            raise PositionOutOfRange(f"position {position} outside 1..{len(self.sequence)}")
        return float(sum(b.probability * b.outcomes[position - 1] for b in self.branches))

    def correlation(self, positions: Sequence[int]) -> float:
        """Mean of the product of outcomes at the given 1-based positions."""
        for position in positions:
            if not 1 <= position <= len(self.sequence):
                raise PositionOutOfRange(f"position {position} outside 1..{len(self.sequence)}")
        idx = [p - 1 for p in positions]
        return float(
            sum(b.probability * np.prod([b.outcomes[i] for i in idx]) for b in self.branches)
        )


def _resolve(observables: Mapping[str, Observable], label: str) -> Observable:
    try:
        return observables[label]
    except KeyError:
        raise UnknownLabel(f"label {label!r} is not in the active catalog") from None


def _branch(state: QuantumState, obs: Observable, outcome: int) -> tuple[float, QuantumState | None]:
    """Outcome probability and renormalized post state (None when degenerate)."""
    proj = obs.projector(outcome)
    if state.is_pure:
        assert state.vector is not None
        projected = proj @ state.vector
        probability = float(np.real(np.vdot(projected, projected)))
        if probability < TOL.prune_probability:
            return max(probability, 0.0), None
        post = QuantumState.pure(projected / math.sqrt(probability), normalize=True)
        return probability, post
    projected = proj @ state.density() @ proj
    probability = float(np.real(np.trace(projected)))
    if probability < TOL.prune_probability:
        return max(probability, 0.0), None
    return probability, QuantumState.mixed(projected / probability)


def lueders_update(state: QuantumState, obs: Observable, outcome: int) -> tuple[float, QuantumState]:
    """Measure ``obs`` on ``state`` and project onto the given outcome.

    Returns the outcome probability and the renormalized post-measurement
    state. Pure inputs yield pure outputs.
    """
    if outcome not in (1, -1):
        raise ValueError(f"outcome must be +1 or -1, got {outcome!r}")
    if state.dim != obs.dim:
        raise DimensionMismatch(f"state dim {state.dim} vs observable dim {obs.dim}")
    probability, post = _branch(state, obs, outcome)
    if post is None:
        raise ZeroProbabilityBranch(
            f"outcome {outcome:+d} of {obs.label!r} has probability {probability!r}"
        )
    return probability, post


def branch_table(
    state: QuantumState,
    seq: SequenceLike,
    observables: Mapping[str, Observable],
) -> BranchTable:
    """Enumerate every outcome path of ``seq`` with exact probabilities.

    Paths whose cumulative probability falls below the pruning threshold are
    dropped; the surviving probabilities sum to one.
    """
    labels = sequence_labels(seq)
    resolved = [_resolve(observables, label) for label in labels]
    for obs in resolved:
        if obs.dim != state.dim:
            raise DimensionMismatch(f"state dim {state.dim} vs observable dim {obs.dim}")

    branches: list[Branch] = []

    def descend(prefix: tuple[int, ...], probability: float, current: QuantumState) -> None:
        depth = len(prefix)
        if depth == len(resolved):
            branches.append(Branch(prefix, probability, current))
            return
        obs = resolved[depth]
        for outcome in (1, -1):
            step_probability, post = _branch(current, obs, outcome)
            total = probability * step_probability
            if post is None or total < TOL.prune_probability:
                continue
            descend(prefix + (outcome,), total, post)

    descend((), 1.0, state)
    return BranchTable(sequence=labels, branches=tuple(branches))


def sequence_mean(
    state: QuantumState, seq: SequenceLike, observables: Mapping[str, Observable]
) -> float:
    """Mean of the product of all outcomes of the sequence."""
    return branch_table(state, seq, observables).product_mean()


def conditional_mean(
    state: QuantumState,
    seq: SequenceLike,
    position: int,
    observables: Mapping[str, Observable],
) -> float:
    """Marginal mean of the outcome at the given 1-based position."""
    return branch_table(state, seq, observables).marginal_mean(position)


def sample_sequence(
    state: QuantumState,
    seq: SequenceLike,
    observables: Mapping[str, Observable],
    rng: np.random.Generator,
) -> OutcomeRecord:
    """Draw one outcome record with exactly the branch-table distribution."""
    labels = sequence_labels(seq)
    current = state
    values: list[int] = []
    for label in labels:
        obs = _resolve(observables, label)
        plus_probability = current.expectation(obs.plus_projector)
        if plus_probability < TOL.prune_probability:
            outcome = -1
        elif plus_probability > 1.0 - TOL.prune_probability:
            outcome = 1
        else:
            outcome = 1 if rng.random() < plus_probability else -1
        _, post = _branch(current, obs, outcome)
        assert post is not None
        current = post
        values.append(outcome)
    return OutcomeRecord(sequence=labels, values=tuple(values))
