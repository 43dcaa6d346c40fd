"""Effective noise channels for two-qubit sequential measurements.

Each physical error source is reduced to the simplest completely positive
map with the right strength: wrong state assignment becomes a classical
record flip, optical pumping failure a reset of the measured qubit to the
maximally mixed state, idle-qubit dephasing a phase flip, decay of the
metastable level an amplitude damping toward the ground level, and the
entangling map used for two-body observables a two-qubit depolarizing
channel applied once before and once after the detection.

States are threaded through the channels as density matrices, so the
channels act exactly and only the measurement outcomes and record flips
are sampled.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, fields
from typing import Mapping

import numpy as np

from .catalog import IDENTITY_2, SIGMA_X, SIGMA_Z, load_set, load_state
from .engine import Observable, OutcomeRecord, QuantumState, sequence_labels
from .errors import UnsupportedDimension
from .inequalities import chsh_noise2, ks_sequential
from .systems import (
    MC_CHUNK,
    OutcomeDistribution,
    child_rng,
    chunked_counts,
    tally_to_distribution,
)

DEFAULT_TABLE_TRIALS = 1100
DEFAULT_HEADLINE_TRIALS = 6600


@dataclass(frozen=True)
class NoiseConfig:
    """Scalar error rates; all probabilities, all in [0, 0.5].

    ``dephasing_idle`` is an effective per-detection-window value standing in
    for residual magnetic-field dephasing after echo compensation; it is
    calibrated, not measured, and flagged as such in the output metadata.
    """

    detection_flip: float = 0.003
    pumping_failure: float = 0.005
    dephasing_idle: float = 0.012
    gate_depolarizing: float = 0.02
    spontaneous_decay: float = 0.001

    def __post_init__(self) -> None:
        for f in fields(self):
            value = getattr(self, f.name)
            if not 0.0 <= value <= 0.5:
                raise ValueError(f"{f.name} = {value!r} outside [0, 0.5]")

    @classmethod
    def zero(cls) -> "NoiseConfig":
        return cls(0.0, 0.0, 0.0, 0.0, 0.0)

    @classmethod
    def from_json_dict(cls, payload: Mapping[str, float]) -> "NoiseConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(payload) - known
        if unknown:
            raise ValueError(f"unknown noise fields: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in payload.items()})

    def to_json_dict(self) -> dict:
        payload = {f.name: getattr(self, f.name) for f in fields(self)}
        payload["dephasing_idle_calibrated"] = True
        return payload


@dataclass(frozen=True)
class NoisyMeasurementPlan:
    label: str
    requires_entangling_map: bool
    measured_qubit: int
    idle_qubit: int


def plan_for(obs: Observable) -> NoisyMeasurementPlan:
    """Classify an observable: single-body ones are detected on their own
    qubit with no entangling map; everything else is mapped onto qubit 0."""
    if obs.dim != 4:
        raise UnsupportedDimension("noise model covers two-qubit systems only")
    op = obs.operator
    blocks = op.reshape(2, 2, 2, 2)
    q_first = blocks[:, 0, :, 0]
    if np.max(np.abs(op - np.kron(q_first, IDENTITY_2))) < 1e-10:
        return NoisyMeasurementPlan(obs.label, False, measured_qubit=0, idle_qubit=1)
    q_second = blocks[0, :, 0, :]
    if np.max(np.abs(op - np.kron(IDENTITY_2, q_second))) < 1e-10:
        return NoisyMeasurementPlan(obs.label, False, measured_qubit=1, idle_qubit=0)
    return NoisyMeasurementPlan(obs.label, True, measured_qubit=0, idle_qubit=1)


_Z_DIAG = {0: np.kron(np.diag([1.0, -1.0]), np.eye(2)).diagonal(),
           1: np.kron(np.eye(2), np.diag([1.0, -1.0])).diagonal()}


def _depolarize(rho: np.ndarray, strength: float) -> np.ndarray:
    if strength == 0.0:
        return rho
    identity = np.eye(4, dtype=complex) / 4.0
    traces = np.einsum("nii->n", rho).real
    return (1.0 - strength) * rho + strength * traces[:, None, None] * identity


def _dephase(rho: np.ndarray, qubit: int, probability: float) -> np.ndarray:
    if probability == 0.0:
        return rho
    z = _Z_DIAG[qubit]
    mask = np.outer(z, z)
    return (1.0 - probability) * rho + probability * mask[None, :, :] * rho


def _decay_kraus(qubit: int, gamma: float) -> tuple[np.ndarray, np.ndarray]:
    k0 = np.array([[math.sqrt(1.0 - gamma), 0.0], [0.0, 1.0]], dtype=complex)
    k1 = np.array([[0.0, 0.0], [math.sqrt(gamma), 0.0]], dtype=complex)
    if qubit == 0:
        return np.kron(k0, IDENTITY_2), np.kron(k1, IDENTITY_2)
    return np.kron(IDENTITY_2, k0), np.kron(IDENTITY_2, k1)


def _decay(rho: np.ndarray, gamma: float) -> np.ndarray:
    if gamma == 0.0:
        return rho
    for qubit in (0, 1):
        k0, k1 = _decay_kraus(qubit, gamma)
        rho = (
            np.einsum("ij,njk,lk->nil", k0, rho, k0.conj())
            + np.einsum("ij,njk,lk->nil", k1, rho, k1.conj())
        )
    return rho


def _pump_reset(rho: np.ndarray, qubit: int, probability: float) -> np.ndarray:
    if probability == 0.0:
        return rho
    shaped = rho.reshape(-1, 2, 2, 2, 2)
    eye = np.eye(2) / 2.0
    if qubit == 0:
        partial = np.einsum("nabad->nbd", shaped)
        reset = np.einsum("ac,nbd->nabcd", eye, partial)
    else:
        partial = np.einsum("nabcb->nac", shaped)
        reset = np.einsum("bd,nac->nabcd", eye, partial)
    return (1.0 - probability) * rho + probability * reset.reshape(-1, 4, 4)


def noisy_batch(
    state: QuantumState,
    seq,
    observables: Mapping[str, Observable],
    noise: NoiseConfig,
    n: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Sample ``n`` classical records of the sequence under the noise model.

    Per step: entangling-map depolarizing (when the plan needs the map),
    idle-qubit dephasing and spontaneous decay during the detection window,
    exact projective collapse, record flip, pumping reset of the measured
    qubit, and the second entangling-map depolarizing.
    """
    if state.dim != 4:
        raise UnsupportedDimension("noise model covers two-qubit systems only")
    labels = sequence_labels(seq)
    plans = {label: plan_for(observables[label]) for label in dict.fromkeys(labels)}
    rho = np.repeat(state.density()[None, :, :], n, axis=0)
    records = np.empty((n, len(labels)), dtype=np.int8)
    lanes = np.arange(n)
    for step, label in enumerate(labels):
        obs = observables[label]
        plan = plans[label]
        if plan.requires_entangling_map:
            rho = _depolarize(rho, noise.gate_depolarizing)
        rho = _dephase(rho, plan.idle_qubit, noise.dephasing_idle)
        rho = _decay(rho, noise.spontaneous_decay)
        plus = obs.plus_projector
        minus = obs.minus_projector
        p_plus = np.clip(np.einsum("nij,ji->n", rho, plus).real, 0.0, 1.0)
        outcomes = np.where(rng.random(n) < p_plus, 1, -1).astype(np.int8)
        collapsed_plus = np.einsum("ij,njk,kl->nil", plus, rho, plus)
        collapsed_minus = np.einsum("ij,njk,kl->nil", minus, rho, minus)
        chosen = np.where((outcomes == 1)[:, None, None], collapsed_plus, collapsed_minus)
        norm = np.where(outcomes == 1, p_plus, 1.0 - p_plus)
        rho = chosen / np.maximum(norm, 1e-300)[:, None, None]
        flips = np.where(rng.random(n) < noise.detection_flip, -1, 1).astype(np.int8)
        records[lanes, step] = outcomes * flips
        rho = _pump_reset(rho, plan.measured_qubit, noise.pumping_failure)
        if plan.requires_entangling_map:
            rho = _depolarize(rho, noise.gate_depolarizing)
    return records


def noisy_sequence_sample(
    state: QuantumState,
    seq,
    observables: Mapping[str, Observable],
    noise: NoiseConfig,
    rng: np.random.Generator,
) -> OutcomeRecord:
    labels = sequence_labels(seq)
    records = noisy_batch(state, labels, observables, noise, 1, rng)
    return OutcomeRecord(sequence=labels, values=tuple(int(v) for v in records[0]))


def noisy_record_distribution(
    state: QuantumState,
    seq,
    observables: Mapping[str, Observable],
    noise: NoiseConfig,
) -> OutcomeDistribution:
    """Exact joint distribution of the classical records under the channel
    model, by enumerating every record path with unnormalized branch states.

    The detection flip mixes the two collapse branches of a step into the
    record branch; all channels are linear, so threading unnormalized
    density matrices keeps every probability exact.
    """
    if state.dim != 4:
        raise UnsupportedDimension("noise model covers two-qubit systems only")
    labels = sequence_labels(seq)
    plans = {label: plan_for(observables[label]) for label in dict.fromkeys(labels)}
    probs: dict[tuple[int, ...], float] = {}

    def descend(prefix: tuple[int, ...], rho: np.ndarray) -> None:
        depth = len(prefix)
        if depth == len(labels):
            weight = float(np.trace(rho).real)
            if weight > 1e-14:
                probs[prefix] = weight
            return
        label = labels[depth]
        obs = observables[label]
        plan = plans[label]
        current = rho[None, :, :]
        if plan.requires_entangling_map:
            current = _depolarize(current, noise.gate_depolarizing)
        current = _dephase(current, plan.idle_qubit, noise.dephasing_idle)
        current = _decay(current, noise.spontaneous_decay)
        staged = current[0]
        collapsed = {
            1: obs.plus_projector @ staged @ obs.plus_projector,
            -1: obs.minus_projector @ staged @ obs.minus_projector,
        }
        for record in (1, -1):
            mixed = (1.0 - noise.detection_flip) * collapsed[record] + (
                noise.detection_flip * collapsed[-record]
            )
            if float(np.trace(mixed).real) <= 1e-14:
                continue
            after = _pump_reset(mixed[None, :, :], plan.measured_qubit, noise.pumping_failure)
            if plan.requires_entangling_map:
                after = _depolarize(after, noise.gate_depolarizing)
            descend(prefix + (record,), after[0])

    descend((), state.density())
    return OutcomeDistribution(
        labels=labels, probs=dict(sorted(probs.items(), reverse=True)), exact=True
    )


class NoisySystem:
    """Noisy two-qubit system exposing the common evaluation surface.

    With ``n_trials`` set, sequences are sampled; with ``n_trials=None`` the
    exact record distribution of the channel model is enumerated instead.
    """

    def __init__(
        self,
        state,
        observable_set,
        noise: NoiseConfig,
        n_trials: int | None = None,
        seed: int = 0,
        name: str = "",
    ):
        self.state = state
        self.observable_set = observable_set
        self.observables = observable_set.observables
        self.noise = noise
        self.n_trials = n_trials
        self.seed = seed
        self.name = name or f"noisy_{observable_set.name}"
        self.source = "exact" if n_trials is None else "monte_carlo"
        self._cache: dict[tuple[str, ...], OutcomeDistribution] = {}

    def outcome_distribution(self, seq) -> OutcomeDistribution:
        labels = sequence_labels(seq)
        if labels in self._cache:
            return self._cache[labels]
        if self.n_trials is None:
            dist = noisy_record_distribution(self.state, labels, self.observables, self.noise)
            self._cache[labels] = dist
            return dist

        def run_chunk(index: int, size: int) -> dict[tuple[int, ...], int]:
            rng = child_rng(self.seed, "noisy", self.name, ",".join(labels), str(index))
            outcomes = noisy_batch(self.state, labels, self.observables, self.noise, size, rng)
            values, freq = np.unique(outcomes, axis=0, return_counts=True)
            return {tuple(int(v) for v in row): int(count) for row, count in zip(values, freq)}

        counts = chunked_counts(self.n_trials, run_chunk)
        dist = tally_to_distribution(labels, counts, self.n_trials)
        self._cache[labels] = dist
        return dist

    def with_preparation(self, state, name: str = "") -> "NoisySystem":
        return NoisySystem(
            state, self.observable_set, self.noise, self.n_trials, self.seed, name or self.name
        )


# ---------------------------------------------------------------------------
# replication recipes


_REPEATED_OBSERVABLES = {
    "z1": np.kron(SIGMA_Z, IDENTITY_2),
    "xx": np.kron(SIGMA_X, SIGMA_X),
}


@dataclass(frozen=True)
class CorrelationTable:
    """Upper-triangular pairwise correlations of five repeated measurements."""

    label: str
    n_trials: int
    values: Mapping[tuple[int, int], float]
    standard_errors: Mapping[tuple[int, int], float]

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["measurement", "2", "3", "4", "5"])
        for i in range(1, 5):
            row: list[object] = [i]
            for j in range(2, 6):
                row.append(f"{self.values[(i, j)]:.4f}" if j > i else "")
            writer.writerow(row)
        return buffer.getvalue()

    def to_json_dict(self) -> dict:
        return {
            "label": self.label,
            "n_trials": self.n_trials,
            "correlations": {f"{i},{j}": v for (i, j), v in sorted(self.values.items())},
            "standard_errors": {
                f"{i},{j}": v for (i, j), v in sorted(self.standard_errors.items())
            },
        }


def repeated_measurement_table(
    observable_label: str, noise: NoiseConfig, n_trials: int | None, seed: int = 0
) -> CorrelationTable:
    """Five consecutive measurements of one observable on the maximally
    mixed state; entry (i, j) is the mean product of records i and j.

    ``n_trials=None`` returns the exact channel-model correlations.
    """
    operator = _REPEATED_OBSERVABLES[observable_label]
    obs = Observable.from_operator(observable_label, operator)
    state = QuantumState.maximally_mixed(4)
    labels = (observable_label,) * 5
    values: dict[tuple[int, int], float] = {}
    errors: dict[tuple[int, int], float] = {}
    if n_trials is None:
        dist = noisy_record_distribution(state, labels, {observable_label: obs}, noise)
        for i in range(1, 5):
            for j in range(i + 1, 6):
                values[(i, j)] = dist.pair_mean(i, j)
                errors[(i, j)] = 0.0
        return CorrelationTable(
            label=observable_label, n_trials=0, values=values, standard_errors=errors
        )
    chunk_count = (n_trials + MC_CHUNK - 1) // MC_CHUNK
    collected = []
    for index in range(chunk_count):
        size = min(MC_CHUNK, n_trials - index * MC_CHUNK)
        rng = child_rng(seed, "table", observable_label, str(index))
        collected.append(
            noisy_batch(state, labels, {observable_label: obs}, noise, size, rng)
        )
    records = np.concatenate(collected, axis=0)
    for i in range(1, 5):
        for j in range(i + 1, 6):
            alpha = float(np.mean(records[:, i - 1] * records[:, j - 1]))
            values[(i, j)] = alpha
            errors[(i, j)] = math.sqrt(max(1.0 - alpha * alpha, 0.0) / n_trials)
    return CorrelationTable(
        label=observable_label, n_trials=n_trials, values=values, standard_errors=errors
    )


def replicate_tables(
    noise: NoiseConfig, n_trials: int | None = DEFAULT_TABLE_TRIALS, seed: int = 0
):
    """Both repeated-measurement correlation tables."""
    return {
        "z1": repeated_measurement_table("z1", noise, n_trials, seed),
        "xx": repeated_measurement_table("xx", noise, n_trials, seed),
    }


def replicate_headlines(
    noise: NoiseConfig,
    n_trials: int | None = DEFAULT_HEADLINE_TRIALS,
    seed: int = 0,
    chsh_set_name: str = "chsh_product",
) -> dict:
    """Headline quantities under the configured noise: the square functional
    on the partially entangled state, and the sandwich-corrected four-term
    quantity on the entangling-map-heavy cyclic set."""
    ks_system = NoisySystem(
        load_state("fig2_psi").state, load_set("mermin_peres"), noise, n_trials, seed
    )
    ks_result = ks_sequential(ks_system, variant="plain")

    chsh_state = {"chsh_product": "x_plus_zero", "chsh_entangled": "phi_plus"}[chsh_set_name]
    chsh_system = NoisySystem(
        load_state(chsh_state).state, load_set(chsh_set_name), noise, n_trials, seed
    )
    chsh_result = chsh_noise2(chsh_system)
    corrected = chsh_result.chi - (chsh_result.bound - 2.0)
    corrected_se = math.sqrt(
        chsh_result.standard_error**2 + chsh_result.bound_standard_error**2
    )
    return {
        "chi_ks": ks_result.chi,
        "chi_ks_se": ks_result.standard_error,
        "chsh_corrected": corrected,
        "chsh_corrected_se": corrected_se,
        "chsh_set": chsh_set_name,
        "n_trials": n_trials,
        "ks_result": ks_result,
        "chsh_result": chsh_result,
    }
