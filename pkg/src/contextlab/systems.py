"""Uniform evaluation surface over quantum states and hidden-variable models.

A system answers one question: what is the joint distribution of outcome
tuples for a given measurement sequence? Quantum systems answer exactly via
branch enumeration (or by sampling when asked to); hidden-variable systems
answer exactly when their preparation is finitely enumerable and by seeded
Monte Carlo otherwise.
"""

from __future__ import annotations

import hashlib
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .catalog import ObservableSet
from .engine import QuantumState, branch_table, lueders_update, sample_sequence, sequence_labels
from .hvmodels import HVModel, condition_on_first, postselect_distribution

MC_CHUNK = 25_000


def worker_count() -> int:
    """Worker cap from CONTEXTLAB_THREADS; chunking is independent of it,
    so results are bit-identical at any setting."""
    try:
        return max(1, int(os.environ.get("CONTEXTLAB_THREADS", "1")))
    except ValueError:
        return 1


def chunked_counts(
    n: int, run_chunk: Callable[[int, int], Mapping[tuple[int, ...], int]]
) -> dict[tuple[int, ...], int]:
    """Split ``n`` replicas into fixed-size chunks, run them (possibly on a
    thread pool), and merge the tallies in chunk order."""
    chunks = [
        (index, min(MC_CHUNK, n - index * MC_CHUNK))
        for index in range((n + MC_CHUNK - 1) // MC_CHUNK)
    ]
    workers = worker_count()
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda c: run_chunk(*c), chunks))
    else:
        results = [run_chunk(*c) for c in chunks]
    merged: dict[tuple[int, ...], int] = {}
    for tally in results:
        for key, count in tally.items():
            merged[key] = merged.get(key, 0) + count
    return merged


def child_rng(seed: int, *key_parts: str) -> np.random.Generator:
    """Generator keyed by (seed, string parts), independent of call order."""
    digest = hashlib.sha256("|".join(key_parts).encode("utf-8")).digest()
    words = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]
    return np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFF, *words]))


def wilson_halfwidth(successes: float, trials: int, z: float = 1.0) -> float:
    """Half-width of the Wilson score interval; behaves like one standard
    error but stays positive near probabilities 0 and 1."""
    if trials <= 0:
        return 0.0
    n = float(trials)
    k = float(successes)
    return float(z * math.sqrt(k * (n - k) / n + z * z / 4.0) / (n + z * z))


@dataclass(frozen=True)
class OutcomeDistribution:
    """Joint distribution of +/-1 outcome tuples for one sequence."""

    labels: tuple[str, ...]
    probs: Mapping[tuple[int, ...], float]
    exact: bool
    n_trials: int = 0

    def probability(self, predicate) -> float:
        return float(sum(p for outcomes, p in self.probs.items() if predicate(outcomes)))

    def probability_se(self, probability: float) -> float:
        if self.exact:
            return 0.0
        return wilson_halfwidth(probability * self.n_trials, self.n_trials)

    def product_mean(self) -> float:
        return float(sum(p * np.prod(o) for o, p in self.probs.items()))

    def marginal_mean(self, position: int) -> float:
        return float(sum(p * o[position - 1] for o, p in self.probs.items()))

    def pair_mean(self, first: int, second: int) -> float:
        return float(sum(p * o[first - 1] * o[second - 1] for o, p in self.probs.items()))

    def mean_se(self, mean: float) -> float:
        if self.exact:
            return 0.0
        return float(math.sqrt(max(1.0 - mean * mean, 0.0) / self.n_trials))

    def consistency_failure_probability(self) -> float:
        """Probability that some repeated label reads two different values."""

        def inconsistent(outcomes: tuple[int, ...]) -> bool:
            seen: dict[str, int] = {}
            for label, value in zip(self.labels, outcomes):
                if seen.setdefault(label, value) != value:
                    return True
            return False

        return self.probability(inconsistent)


def tally_to_distribution(labels, counts: Mapping[tuple[int, ...], int], n: int) -> OutcomeDistribution:
    return OutcomeDistribution(
        labels=tuple(labels),
        probs={o: c / n for o, c in sorted(counts.items(), reverse=True)},
        exact=False,
        n_trials=n,
    )


class QuantumSystem:
    """A prepared quantum state measured through a catalog of observables."""

    def __init__(
        self,
        state: QuantumState,
        observable_set: ObservableSet,
        monte_carlo_trials: int | None = None,
        seed: int = 0,
        name: str = "",
    ):
        self.state = state
        self.observable_set = observable_set
        self.observables = observable_set.observables
        self.monte_carlo_trials = monte_carlo_trials
        self.seed = seed
        self.name = name or observable_set.name
        self._cache: dict[tuple[str, ...], OutcomeDistribution] = {}

    @property
    def source(self) -> str:
        return "exact" if self.monte_carlo_trials is None else "monte_carlo"

    def outcome_distribution(self, seq) -> OutcomeDistribution:
        labels = sequence_labels(seq)
        if labels not in self._cache:
            if self.monte_carlo_trials is None:
                table = branch_table(self.state, labels, self.observables)
                dist = OutcomeDistribution(labels, table.outcome_probabilities(), exact=True)
            else:
                n = self.monte_carlo_trials
                rng = child_rng(self.seed, "quantum_mc", self.name, ",".join(labels))
                counts: dict[tuple[int, ...], int] = {}
                for _ in range(n):
                    record = sample_sequence(self.state, labels, self.observables, rng)
                    counts[record.values] = counts.get(record.values, 0) + 1
                dist = tally_to_distribution(labels, counts, n)
            self._cache[labels] = dist
        return self._cache[labels]

    def with_preparation(self, state: QuantumState, name: str = "") -> "QuantumSystem":
        return QuantumSystem(
            state,
            self.observable_set,
            monte_carlo_trials=self.monte_carlo_trials,
            seed=self.seed,
            name=name or self.name,
        )

    def postselect(self, label: str, outcome: int) -> "QuantumSystem":
        _, post = lueders_update(self.state, self.observables[label], outcome)
        return self.with_preparation(post, name=f"{self.name}>{label}={outcome:+d}")


class HVSystem:
    """A hidden-variable model with a fixed preparation distribution."""

    def __init__(self, model: HVModel, distribution, n_trials: int = 100_000, seed: int = 0):
        self.model = model
        self.distribution = distribution
        self.n_trials = n_trials
        self.seed = seed
        self._cache: dict[tuple[str, ...], OutcomeDistribution] = {}

    @property
    def name(self) -> str:
        return getattr(self.distribution, "id", "hv")

    @property
    def source(self) -> str:
        return "exact" if self._has_support() else "monte_carlo"

    def _has_support(self, length: int = 3) -> bool:
        support = getattr(self.distribution, "support", None)
        return support is not None and support(length) is not None

    def outcome_distribution(self, seq) -> OutcomeDistribution:
        labels = sequence_labels(seq)
        if labels in self._cache:
            return self._cache[labels]
        points = None
        support = getattr(self.distribution, "support", None)
        if support is not None:
            points = support(len(labels))
        if points is not None:
            probs: dict[tuple[int, ...], float] = {}
            for state, weight in points:
                values = []
                current = state
                for label in labels:
                    value, current = self.model.measure(current, label)
                    values.append(value)
                key = tuple(values)
                probs[key] = probs.get(key, 0.0) + weight
            dist = OutcomeDistribution(
                labels, dict(sorted(probs.items(), reverse=True)), exact=True
            )
        else:
            dist = self._monte_carlo(labels)
        self._cache[labels] = dist
        return dist

    def _monte_carlo(self, labels: tuple[str, ...]) -> OutcomeDistribution:
        batcher = getattr(self.model, "batch_outcomes", None)

        def run_chunk(index: int, size: int) -> dict[tuple[int, ...], int]:
            rng = child_rng(self.seed, "hv_mc", self.name, ",".join(labels), str(index))
            counts: dict[tuple[int, ...], int] = {}
            if batcher is not None:
                outcomes = batcher(self.distribution, labels, size, rng)
                values, freq = np.unique(outcomes, axis=0, return_counts=True)
                for row, count in zip(values, freq):
                    counts[tuple(int(v) for v in row)] = int(count)
            else:
                for _ in range(size):
                    state = self.distribution.sample(rng)
                    record = []
                    for label in labels:
                        value, state = self.model.measure(state, label)
                        record.append(value)
                    key = tuple(record)
                    counts[key] = counts.get(key, 0) + 1
            return counts

        counts = chunked_counts(self.n_trials, run_chunk)
        return tally_to_distribution(labels, counts, self.n_trials)

    def with_preparation(self, distribution, name: str = "") -> "HVSystem":
        return HVSystem(self.model, distribution, n_trials=self.n_trials, seed=self.seed)

    def postselect(self, label: str, outcome: int) -> "HVSystem":
        return self.with_preparation(
            postselect_distribution(self.model, self.distribution, label, outcome)
        )

    def condition(self, label: str, outcome: int) -> "HVSystem":
        return self.with_preparation(
            condition_on_first(self.model, self.distribution, label, outcome)
        )
