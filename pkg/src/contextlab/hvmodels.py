"""Hidden-variable models behind a common prepare/measure contract.

Every model exposes deterministic ``measure(hidden_state, label)``; all
randomness lives in drawing the hidden state from a distribution. The
module ships a sign-locking contextual model, a model that reproduces all
quantum predictions by carrying a state vector and one rescaled parameter
per observable, deterministic assignment tables with optional readout flip
noise, and two minimal models that break exactly one half of the
operational compatibility definition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product
from typing import Mapping

import numpy as np

from .engine import Observable, OutcomeRecord, QuantumState, sequence_labels
from .errors import (
    NotFiniteSupport,
    UnknownLabel,
    UnsupportedLabel,
    ZeroProbabilityCondition,
)
from .tolerances import MAX_SEQUENCE_LENGTH

LOCKING_LABELS = ("A", "B", "C", "D")
_LOCK_PARTNER = {"A": "D", "D": "A"}


class HVModel:
    """Behavioral contract: deterministic measurement on opaque hidden state."""

    labels: tuple[str, ...] | None = None

    def measure(self, state, label: str):
        raise NotImplementedError

    def supports(self, label: str) -> bool:
        return self.labels is None or label in self.labels


# ---------------------------------------------------------------------------
# distributions


@dataclass(frozen=True)
class FiniteSupport:
    """Explicit list of (hidden state, weight) pairs."""

    id: str
    points: tuple[tuple[object, float], ...]

    def __post_init__(self) -> None:
        total = sum(w for _, w in self.points)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {total!r}, expected 1")

    def sample(self, rng: np.random.Generator):
        u = rng.random()
        acc = 0.0
        for state, weight in self.points:
            acc += weight
            if u < acc:
                return state
        return self.points[-1][0]

    def support(self, length: int):
        return list(self.points)


# ---------------------------------------------------------------------------
# sign-locking model


@dataclass(frozen=True)
class LockingState:
    """Four +/-1 slots; a locked slot no longer reacts to side effects."""

    values: tuple[int, int, int, int]
    locked: tuple[bool, bool, bool, bool]

    def slot(self, label: str) -> int:
        return LOCKING_LABELS.index(label)

    def to_json_dict(self) -> dict:
        marks = {(1, False): "+", (-1, False): "-", (1, True): "L+", (-1, True): "L-"}
        return {
            label: marks[(v, l)]
            for label, v, l in zip(LOCKING_LABELS, self.values, self.locked)
        }


class LockingModel(HVModel):
    """Reports the stored sign and locks it; measuring one end of the special
    pair reverses and locks the partner sign unless the partner is locked."""

    labels = LOCKING_LABELS

    def measure(self, state: LockingState, label: str):
        if label not in LOCKING_LABELS:
            raise UnknownLabel(f"label {label!r} not in {LOCKING_LABELS}")
        idx = state.slot(label)
        value = state.values[idx]
        values = list(state.values)
        locked = list(state.locked)
        locked[idx] = True
        partner = _LOCK_PARTNER.get(label)
        if partner is not None:
            pidx = LOCKING_LABELS.index(partner)
            if not locked[pidx]:
                values[pidx] = -values[pidx]
                locked[pidx] = True
        return value, LockingState(tuple(values), tuple(locked))


def locking_initial_distribution() -> FiniteSupport:
    """Half/half mixture of the all-plus and all-minus unlocked states."""
    plus = LockingState((1, 1, 1, 1), (False, False, False, False))
    minus = LockingState((-1, -1, -1, -1), (False, False, False, False))
    return FiniteSupport(id="locking_half_half", points=((plus, 0.5), (minus, 0.5)))


# ---------------------------------------------------------------------------
# quantum-reproducing model


@dataclass(frozen=True)
class QMHVState:
    """One parameter in [0, 1) per observable plus a unit state vector."""

    lambdas: Mapping[str, float]
    psi: np.ndarray

    def to_json_dict(self) -> dict:
        return {
            "lambdas": {k: float(v) for k, v in sorted(self.lambdas.items())},
            "psi": [[float(z.real), float(z.imag)] for z in np.asarray(self.psi)],
        }


@dataclass(frozen=True)
class StateVectorEnsemble:
    """Generative hidden-state distribution: a finite pure-state mixture with
    independent uniform parameters, optionally restricted to grid values for
    labels that have been conditioned on."""

    id: str
    labels: tuple[str, ...]
    branches: tuple[tuple[float, np.ndarray], ...]
    constraints: Mapping[str, tuple[tuple[float, ...], ...]] = field(default_factory=dict)
    grid_size: int = 1024

    def __post_init__(self) -> None:
        total = sum(w for w, _ in self.branches)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"branch weights sum to {total!r}, expected 1")

    def sample(self, rng: np.random.Generator) -> QMHVState:
        weights = [w for w, _ in self.branches]
        index = int(rng.choice(len(self.branches), p=weights))
        lambdas: dict[str, float] = {}
        for label in self.labels:
            allowed = self.constraints.get(label)
            if allowed is None:
                lambdas[label] = float(rng.random())
            else:
                options = allowed[index]
                lambdas[label] = float(options[int(rng.integers(len(options)))])
        return QMHVState(lambdas=lambdas, psi=self.branches[index][1].copy())

    def support(self, length: int):
        return None

    def reconstructed_density(self) -> np.ndarray:
        dim = self.branches[0][1].size
        rho = np.zeros((dim, dim), dtype=complex)
        for weight, psi in self.branches:
            rho += weight * np.outer(psi, psi.conj())
        return rho


class QMReproducingModel(HVModel):
    """Outcome is -1 exactly when the observable's parameter falls below the
    state vector's weight on the -1 eigenspace; both the parameter and the
    vector are rescaled onto the realized branch."""

    def __init__(self, observables: Mapping[str, Observable]):
        self.observables = dict(observables)
        self.labels = tuple(self.observables)

    def minus_weight(self, psi: np.ndarray, label: str) -> float:
        obs = self.observables[label]
        projected = obs.minus_projector @ psi
        return float(min(max(np.real(np.vdot(psi, projected)), 0.0), 1.0))

    def measure(self, state: QMHVState, label: str):
        if label not in self.observables:
            raise UnsupportedLabel(f"label {label!r} not in model catalog")
        obs = self.observables[label]
        lam = state.lambdas.get(label, 0.0)
        projected_minus = obs.minus_projector @ state.psi
        q = float(min(max(np.real(np.vdot(state.psi, projected_minus)), 0.0), 1.0))
        if lam < q:
            value = -1
            new_lam = lam / q
            new_psi = projected_minus / math.sqrt(q)
        else:
            value = 1
            new_lam = (lam - q) / (1.0 - q) if q < 1.0 else lam
            plus = state.psi - projected_minus
            new_psi = plus / math.sqrt(1.0 - q)
        lambdas = dict(state.lambdas)
        lambdas[label] = min(max(new_lam, 0.0), math.nextafter(1.0, 0.0))
        return value, QMHVState(lambdas=lambdas, psi=new_psi)

    def batch_outcomes(
        self,
        distribution: StateVectorEnsemble,
        seq,
        n: int,
        rng: np.random.Generator,
    ) -> np.ndarray:
        """Vectorized sampling of ``n`` independently prepared replicas."""
        labels = sequence_labels(seq)
        weights = np.array([w for w, _ in distribution.branches])
        vectors = np.stack([psi for _, psi in distribution.branches])
        index = rng.choice(len(weights), size=n, p=weights)
        psi = vectors[index].astype(complex)
        lambdas: dict[str, np.ndarray] = {}
        for label in dict.fromkeys(labels):
            allowed = distribution.constraints.get(label)
            if allowed is None:
                lambdas[label] = rng.random(n)
            else:
                lam = np.empty(n)
                for i, options in enumerate(allowed):
                    mask = index == i
                    count = int(mask.sum())
                    if count:
                        choices = np.asarray(options)
                        lam[mask] = choices[rng.integers(len(choices), size=count)]
                lambdas[label] = lam
        outcomes = np.empty((n, len(labels)), dtype=np.int8)
        for step, label in enumerate(labels):
            projector = self.observables[label].minus_projector
            projected = psi @ projector.T
            q = np.clip(np.einsum("na,na->n", psi.conj(), projected).real, 0.0, 1.0)
            lam = lambdas[label]
            minus = lam < q
            outcomes[:, step] = np.where(minus, -1, 1)
            denom = np.where(minus, q, 1.0 - q)
            denom = np.maximum(denom, 1e-300)
            rescaled = np.where(minus, lam / denom, (lam - q) / denom)
            lambdas[label] = np.clip(rescaled, 0.0, np.nextafter(1.0, 0.0))
            branch = np.where(minus[:, None], projected, psi - projected)
            psi = branch / np.sqrt(denom)[:, None]
        return outcomes


def qmhv_distribution_for(
    state: QuantumState, labels, dist_id: str = "qm_ensemble"
) -> StateVectorEnsemble:
    """Finite pure-state decomposition of a state, with uniform parameters."""
    labels = tuple(labels)
    if state.is_pure:
        branches = ((1.0, np.asarray(state.vector, dtype=complex)),)
    else:
        eigenvalues, eigenvectors = np.linalg.eigh(state.density())
        kept = [
            (float(w), eigenvectors[:, i].astype(complex))
            for i, w in enumerate(eigenvalues)
            if w > 1e-12
        ]
        total = sum(w for w, _ in kept)
        branches = tuple((w / total, v) for w, v in kept)
    return StateVectorEnsemble(id=dist_id, labels=labels, branches=branches)


# ---------------------------------------------------------------------------
# deterministic assignment tables with optional readout flips


@dataclass(frozen=True)
class AssignmentState:
    """A fixed +/-1 value per label plus a pre-drawn flip for every step."""

    labels: tuple[str, ...]
    values: tuple[int, ...]
    flips: tuple[int, ...]
    position: int = 0

    def to_json_dict(self) -> dict:
        return {
            "table": dict(zip(self.labels, self.values)),
            "flips": list(self.flips),
            "position": self.position,
        }


class AssignmentModel(HVModel):
    """Noncontextual baseline: reports the table entry, possibly flipped by
    the pre-drawn readout noise for the current step."""

    def __init__(self, labels):
        self.labels = tuple(labels)

    def measure(self, state: AssignmentState, label: str):
        if label not in state.labels:
            raise UnsupportedLabel(f"label {label!r} not in assignment table")
        value = state.values[state.labels.index(label)] * state.flips[state.position]
        return value, AssignmentState(
            labels=state.labels,
            values=state.values,
            flips=state.flips,
            position=state.position + 1,
        )


@dataclass(frozen=True)
class AssignmentEnsemble:
    """Mixture of assignment tables; flips are drawn i.i.d. per step."""

    id: str
    labels: tuple[str, ...]
    tables: tuple[tuple[tuple[int, ...], float], ...]
    flip_probability: float = 0.0

    def __post_init__(self) -> None:
        total = sum(w for _, w in self.tables)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"table weights sum to {total!r}, expected 1")
        if not 0.0 <= self.flip_probability <= 0.5:
            raise ValueError("flip probability must lie in [0, 0.5]")

    def sample(self, rng: np.random.Generator) -> AssignmentState:
        u = rng.random()
        acc = 0.0
        values = self.tables[-1][0]
        for table, weight in self.tables:
            acc += weight
            if u < acc:
                values = table
                break
        if self.flip_probability > 0.0:
            flips = tuple(
                -1 if rng.random() < self.flip_probability else 1
                for _ in range(MAX_SEQUENCE_LENGTH)
            )
        else:
            flips = (1,) * MAX_SEQUENCE_LENGTH
        return AssignmentState(labels=self.labels, values=values, flips=flips)

    def support(self, length: int):
        if self.flip_probability == 0.0:
            return [
                (AssignmentState(self.labels, table, (1,) * MAX_SEQUENCE_LENGTH), w)
                for table, w in self.tables
            ]
        eps = self.flip_probability
        points = []
        for table, table_weight in self.tables:
            for pattern in product((1, -1), repeat=length):
                flipped = sum(1 for f in pattern if f == -1)
                weight = table_weight * (eps**flipped) * ((1 - eps) ** (length - flipped))
                flips = pattern + (1,) * (MAX_SEQUENCE_LENGTH - length)
                points.append((AssignmentState(self.labels, table, flips), weight))
        return points


def uniform_assignment_ensemble(labels, flip_probability: float = 0.0) -> AssignmentEnsemble:
    """Equal-weight mixture of all deterministic sign tables over ``labels``."""
    labels = tuple(labels)
    tables = tuple(
        (values, 1.0 / 2 ** len(labels)) for values in product((1, -1), repeat=len(labels))
    )
    return AssignmentEnsemble(
        id=f"assignment_uniform_flip{flip_probability:g}",
        labels=labels,
        tables=tables,
        flip_probability=flip_probability,
    )


def single_assignment(labels, values, flip_probability: float = 0.0) -> AssignmentEnsemble:
    return AssignmentEnsemble(
        id="assignment_point",
        labels=tuple(labels),
        tables=((tuple(values), 1.0),),
        flip_probability=flip_probability,
    )


# ---------------------------------------------------------------------------
# compatibility counterexamples


@dataclass(frozen=True)
class FirstSignState:
    """Remembers only which observable was measured first."""

    first: str | None = None

    def to_json_dict(self) -> dict:
        return {"first": self.first}


class FirstMeasurementSignModel(HVModel):
    """The special label reads +1 when it opened the sequence and -1 when the
    partner did; the partner always reads +1. Values never change within a
    run, so repeated readings stay consistent while the mean of the special
    label depends on the sequence."""

    def __init__(self, special: str = "A", partner: str = "B"):
        self.special = special
        self.partner = partner
        self.labels = (special, partner)

    def measure(self, state: FirstSignState, label: str):
        if label not in self.labels:
            raise UnsupportedLabel(f"label {label!r} not in {self.labels}")
        first = state.first if state.first is not None else label
        new_state = FirstSignState(first=first)
        if label == self.partner:
            return 1, new_state
        return (1 if first == self.special else -1), new_state


def first_sign_distribution(special: str = "A", partner: str = "B") -> FiniteSupport:
    return FiniteSupport(id=f"first_sign_{special}{partner}", points=((FirstSignState(), 1.0),))


@dataclass(frozen=True)
class OutcomeStreamState:
    """Pre-drawn i.i.d. outcome stream per label; each measurement consumes
    the next entry for its label."""

    labels: tuple[str, ...]
    streams: tuple[tuple[int, ...], ...]
    positions: tuple[int, ...]

    def to_json_dict(self) -> dict:
        return {
            "streams": {label: list(s) for label, s in zip(self.labels, self.streams)},
            "positions": dict(zip(self.labels, self.positions)),
        }


class MeanResamplerModel(HVModel):
    """Memoryless baseline: every reading of a label is an independent draw
    with a fixed mean, so sequence means never move but repeats disagree."""

    def __init__(self, labels):
        self.labels = tuple(labels)

    def measure(self, state: OutcomeStreamState, label: str):
        if label not in state.labels:
            raise UnsupportedLabel(f"label {label!r} not in resampler streams")
        idx = state.labels.index(label)
        value = state.streams[idx][state.positions[idx]]
        positions = list(state.positions)
        positions[idx] += 1
        return value, OutcomeStreamState(state.labels, state.streams, tuple(positions))


@dataclass(frozen=True)
class ResamplerEnsemble:
    id: str
    labels: tuple[str, ...]
    mean: float = 0.0

    def __post_init__(self) -> None:
        if not -1.0 <= self.mean <= 1.0:
            raise ValueError("mean must lie in [-1, 1]")

    @property
    def plus_probability(self) -> float:
        return (1.0 + self.mean) / 2.0

    def sample(self, rng: np.random.Generator) -> OutcomeStreamState:
        p = self.plus_probability
        streams = tuple(
            tuple(1 if rng.random() < p else -1 for _ in range(MAX_SEQUENCE_LENGTH))
            for _ in self.labels
        )
        return OutcomeStreamState(self.labels, streams, (0,) * len(self.labels))

    def support(self, length: int):
        if (2 ** (length * len(self.labels))) > 1 << 16:
            return None
        p = self.plus_probability
        points = []
        pad = (1,) * (MAX_SEQUENCE_LENGTH - length)
        for combo in product(product((1, -1), repeat=length), repeat=len(self.labels)):
            weight = 1.0
            for stream in combo:
                plus = sum(1 for v in stream if v == 1)
                weight *= (p**plus) * ((1 - p) ** (length - plus))
            if weight == 0.0:
                continue
            streams = tuple(stream + pad for stream in combo)
            points.append((OutcomeStreamState(self.labels, streams, (0,) * len(self.labels)), weight))
        return points


# ---------------------------------------------------------------------------
# drivers


def run_hv_sequence(model: HVModel, distribution, seq, rng: np.random.Generator) -> OutcomeRecord:
    """Prepare one hidden state and thread it through the sequence."""
    labels = sequence_labels(seq)
    for label in labels:
        if not model.supports(label):
            raise UnsupportedLabel(f"label {label!r} not supported by model")
    state = distribution.sample(rng)
    values = []
    for label in labels:
        value, state = model.measure(state, label)
        values.append(value)
    return OutcomeRecord(sequence=labels, values=tuple(values))


def condition_on_first(model: HVModel, distribution, label: str, outcome: int):
    """Bayes-condition the preparation on what a first measurement of
    ``label`` would yield. Hidden states are kept in their pre-measurement
    form; only the weights change."""
    if outcome not in (1, -1):
        raise ValueError("outcome must be +1 or -1")
    if isinstance(distribution, StateVectorEnsemble):
        return _condition_ensemble(model, distribution, label, outcome)
    points = distribution.support(1) if hasattr(distribution, "support") else None
    if points is None:
        raise NotFiniteSupport(
            f"distribution {getattr(distribution, 'id', distribution)!r} is not finitely enumerable"
        )
    kept = []
    for state, weight in points:
        value, _ = model.measure(state, label)
        if value == outcome:
            kept.append((state, weight))
    total = sum(w for _, w in kept)
    if total < 1e-12:
        raise ZeroProbabilityCondition(
            f"outcome {outcome:+d} of {label!r} has zero probability under {distribution.id!r}"
        )
    return FiniteSupport(
        id=f"{distribution.id}|{label}={outcome:+d}",
        points=tuple((s, w / total) for s, w in kept),
    )


def _condition_ensemble(
    model: HVModel, dist: StateVectorEnsemble, label: str, outcome: int
) -> StateVectorEnsemble:
    if not isinstance(model, QMReproducingModel):
        raise NotFiniteSupport("ensemble conditioning needs the quantum-reproducing model")
    grid_size = dist.grid_size
    full_grid = tuple((j + 0.5) / grid_size for j in range(grid_size))
    existing = dist.constraints.get(label)
    new_weights = []
    new_allowed = []
    for i, (weight, psi) in enumerate(dist.branches):
        q = model.minus_weight(psi, label)
        current = existing[i] if existing is not None else full_grid
        allowed = tuple(g for g in current if (-1 if g < q else 1) == outcome)
        fraction = len(allowed) / len(current) if current else 0.0
        new_weights.append(weight * fraction)
        new_allowed.append(allowed)
    total = sum(new_weights)
    if total < 1e-12:
        raise ZeroProbabilityCondition(
            f"outcome {outcome:+d} of {label!r} has zero probability under {dist.id!r}"
        )
    keep = [i for i, w in enumerate(new_weights) if w > 0.0]
    constraints = {
        key: tuple(values[i] for i in keep)
        for key, values in dist.constraints.items()
        if key != label
    }
    constraints[label] = tuple(new_allowed[i] for i in keep)
    return StateVectorEnsemble(
        id=f"{dist.id}|{label}={outcome:+d}",
        labels=dist.labels,
        branches=tuple((new_weights[i] / total, dist.branches[i][1]) for i in keep),
        constraints=constraints,
        grid_size=grid_size,
    )


def postselect_distribution(model: HVModel, distribution, label: str, outcome: int):
    """Measure ``label``, keep runs with the given outcome, and return the
    distribution of post-measurement hidden states."""
    points = distribution.support(MAX_SEQUENCE_LENGTH) if hasattr(distribution, "support") else None
    if points is None:
        raise NotFiniteSupport("postselection needs a finitely enumerable distribution")
    kept = []
    for state, weight in points:
        value, after = model.measure(state, label)
        if value == outcome:
            kept.append((after, weight))
    total = sum(w for _, w in kept)
    if total < 1e-12:
        raise ZeroProbabilityCondition(
            f"outcome {outcome:+d} of {label!r} has zero probability"
        )
    return FiniteSupport(
        id=f"{getattr(distribution, 'id', 'dist')}>{label}={outcome:+d}",
        points=tuple((s, w / total) for s, w in kept),
    )


# ---------------------------------------------------------------------------
# registry


MODEL_IDS = (
    "noncontextual_assignment",
    "locking",
    "qm_reproducing",
    "first_measurement_sign",
    "mean_resampler",
)


def make_model(model_id: str, params: dict | None = None):
    """Build (model, default distribution) from a string id and a JSON-style
    parameter block."""
    params = dict(params or {})
    if model_id == "locking":
        return LockingModel(), locking_initial_distribution()
    if model_id == "noncontextual_assignment":
        labels = tuple(params.get("labels", LOCKING_LABELS))
        flip = float(params.get("flip_probability", 0.0))
        table = params.get("table")
        if table is not None:
            ensemble = single_assignment(labels, tuple(int(table[l]) for l in labels), flip)
        else:
            ensemble = uniform_assignment_ensemble(labels, flip)
        return AssignmentModel(labels), ensemble
    if model_id == "qm_reproducing":
        from .catalog import load_set, load_state

        set_name = params.get("set", "mermin_peres")
        state_name = params.get("state", "fig2_psi")
        obs_set = load_set(set_name)
        model = QMReproducingModel(obs_set.observables)
        distribution = qmhv_distribution_for(
            load_state(state_name).state,
            obs_set.labels,
            dist_id=f"qm_{state_name}",
        )
        return model, distribution
    if model_id == "first_measurement_sign":
        special = params.get("special", "A")
        partner = params.get("partner", "B")
        return (
            FirstMeasurementSignModel(special, partner),
            first_sign_distribution(special, partner),
        )
    if model_id == "mean_resampler":
        labels = tuple(params.get("labels", ("A", "B")))
        mean = float(params.get("mean", 0.0))
        return MeanResamplerModel(labels), ResamplerEnsemble(
            id=f"resampler_mean{mean:g}", labels=labels, mean=mean
        )
    raise UnknownLabel(f"unknown model id {model_id!r}; known: {MODEL_IDS}")
