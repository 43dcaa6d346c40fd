"""Operational compatibility diagnostics for sequential measurements.

Everything here runs against any system exposing ``outcome_distribution``:
disturbance probabilities read off sandwich sequences, the summed error over
all length-3 sequences for a pair, worst-case mean shifts over preparation
lists, repeated-reading audits, and the reduction of the full compatibility
definition to length-2 statistics.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from itertools import product
from typing import Mapping, Sequence

from .errors import CounterfactualsUnavailable, EmptyPreparationList, NotFiniteSupport
from .hvmodels import HVModel
from .systems import HVSystem, OutcomeDistribution, wilson_halfwidth
from .tolerances import MAX_SEQUENCE_LENGTH, TOL


@dataclass(frozen=True)
class DisturbanceReport:
    """A single disturbance probability with its statistical error."""

    subject: str
    p_err: float
    standard_error: float
    n_trials: int
    source: str
    terms: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not -1e-12 <= self.p_err <= 1.0 + 1e-12:
            raise ValueError(f"p_err {self.p_err!r} outside [0, 1]")
        if self.source == "exact" and self.standard_error != 0.0:
            raise ValueError("exact reports carry zero standard error")

    def to_json_dict(self) -> dict:
        payload = {
            "subject": self.subject,
            "p_err": self.p_err,
            "standard_error": self.standard_error,
            "n_trials": self.n_trials,
            "source": self.source,
        }
        if self.terms:
            payload["terms"] = dict(self.terms)
        return payload


@dataclass(frozen=True)
class EpsilonReport:
    """Worst-case shift of the second observable's mean caused by measuring
    the first one beforehand, over a named preparation list."""

    pair: tuple[str, str]
    epsilon: float
    standard_error: float
    n_trials: int
    source: str
    per_preparation: tuple[tuple[str, float], ...]
    half_bound_ok: bool

    def to_json_dict(self) -> dict:
        return {
            "pair": list(self.pair),
            "epsilon": self.epsilon,
            "standard_error": self.standard_error,
            "n_trials": self.n_trials,
            "source": self.source,
            "per_preparation": [[name, diff] for name, diff in self.per_preparation],
            "half_bound_ok": self.half_bound_ok,
        }


@dataclass(frozen=True)
class FlipReport:
    """Counterfactual flip probability; only computable for hidden-variable
    systems whose preparation is finitely enumerable."""

    subject: str
    p_flip: float | None
    computable: bool
    source: str = "exact"

    def to_json_dict(self) -> dict:
        return {
            "subject": self.subject,
            "p_flip": self.p_flip,
            "computable": self.computable,
            "source": self.source,
        }


def _sequence_name(labels: Sequence[str]) -> str:
    return "".join(f"{label}{i + 1}" for i, label in enumerate(labels))


def sequence_p_err(system, labels: Sequence[str]) -> DisturbanceReport:
    """Probability that some label measured repeatedly in ``labels`` reads
    two different values."""
    dist = system.outcome_distribution(tuple(labels))
    p = dist.consistency_failure_probability()
    return DisturbanceReport(
        subject=_sequence_name(labels),
        p_err=min(max(p, 0.0), 1.0),
        standard_error=dist.probability_se(p),
        n_trials=dist.n_trials,
        source="exact" if dist.exact else "monte_carlo",
    )


def p_err_sandwich(system, bracket: str, middle: str) -> DisturbanceReport:
    """Disturbance of ``bracket`` across the sequence bracket, middle,
    bracket: the probability that its first and third readings disagree."""
    return sequence_p_err(system, (bracket, middle, bracket))


def p_err_s3(system, a: str, b: str) -> DisturbanceReport:
    """Summed disturbance over all eight length-3 sequences of the pair.

    Two sequences whose failures are already counted by their all-repeat
    counterparts (b,b,a and a,a,b) enter the ledger but not the sum.
    """
    excluded = {(b, b, a), (a, a, b)}
    terms: dict[str, float] = {}
    variance = 0.0
    n_trials = 0
    exact = True
    total = 0.0
    for labels in product((a, b), repeat=3):
        report = sequence_p_err(system, labels)
        terms[report.subject] = report.p_err
        n_trials = max(n_trials, report.n_trials)
        exact = exact and report.source == "exact"
        if labels not in excluded:
            total += report.p_err
            variance += report.standard_error**2
    total = min(max(total, 0.0), 1.0)
    return DisturbanceReport(
        subject=f"S3[{a}{b}]",
        p_err=total,
        standard_error=0.0 if exact else math.sqrt(variance),
        n_trials=n_trials,
        source="exact" if exact else "monte_carlo",
        terms=terms,
    )


def compatible_volume_lower_bound(report: DisturbanceReport) -> float:
    """Lower bound on the hidden-state volume passing every length-3
    compatibility test, from the summed disturbance."""
    return max(0.0, 1.0 - report.p_err)


def epsilon_pair(system, first: str, second: str, preparations) -> EpsilonReport:
    """Worst case of |<second first> mean shift| over the preparations:
    the mean of ``second`` measured before versus after ``first``.

    Each preparation is a (name, prepared system) pair or a bare object
    accepted by ``system.with_preparation``.
    """
    named = _named_preparations(system, preparations)
    if not named:
        raise EmptyPreparationList("epsilon needs at least one preparation")
    diffs: list[tuple[str, float]] = []
    worst = 0.0
    worst_se = 0.0
    n_trials = 0
    exact = True
    half_bound_ok = True
    for name, prepared in named:
        before = prepared.outcome_distribution((second, first))
        after = prepared.outcome_distribution((first, second))
        mean_before = before.marginal_mean(1)
        mean_after = after.marginal_mean(2)
        diff = abs(mean_before - mean_after)
        se = math.sqrt(before.mean_se(mean_before) ** 2 + after.mean_se(mean_after) ** 2)
        diffs.append((name, diff))
        if diff > worst:
            worst, worst_se = diff, se
        n_trials = max(n_trials, before.n_trials, after.n_trials)
        exact = exact and before.exact and after.exact
    epsilon = worst
    for name, prepared in named:
        before = prepared.outcome_distribution((second, first))
        after = prepared.outcome_distribution((first, second))
        for sign in (1, -1):
            p_before = (1.0 + sign * before.marginal_mean(1)) / 2.0
            p_after = (1.0 + sign * after.marginal_mean(2)) / 2.0
            if abs(p_before - p_after) > epsilon / 2.0 + 1e-9:
                half_bound_ok = False
    return EpsilonReport(
        pair=(first, second),
        epsilon=epsilon,
        standard_error=0.0 if exact else worst_se,
        n_trials=n_trials,
        source="exact" if exact else "monte_carlo",
        per_preparation=tuple(diffs),
        half_bound_ok=half_bound_ok,
    )


def _named_preparations(system, preparations):
    named = []
    for item in preparations:
        if isinstance(item, tuple) and len(item) == 2 and isinstance(item[0], str):
            name, prep = item
        else:
            name, prep = getattr(item, "name", str(item)), item
        if hasattr(prep, "outcome_distribution"):
            named.append((name, prep))
        else:
            named.append((name, system.with_preparation(prep)))
    return named


def default_quantum_preparations(system, pair: tuple[str, str], states) -> list:
    """Named base states plus every depth-1 measure-and-postselect variant
    over the pair's labels."""
    named = []
    for named_state in states:
        base = system.with_preparation(named_state.state, name=named_state.name)
        named.append((named_state.name, base))
        for label in pair:
            for outcome in (1, -1):
                dist = base.outcome_distribution((label,))
                if dist.probs.get((outcome,), 0.0) <= TOL.prune_probability:
                    continue
                named.append(
                    (f"{named_state.name}>{label}={outcome:+d}", base.postselect(label, outcome))
                )
    return named


def condition_i_audit(system, pair: tuple[str, str], max_len: int = 4):
    """Enumerate all sequences over the pair up to ``max_len`` and report
    every repeated-reading inconsistency above threshold."""
    if max_len > 6:
        raise ValueError("audit limited to sequences of length 6")
    violations = []
    for length in range(1, max_len + 1):
        for labels in product(pair, repeat=length):
            if len(set(labels)) == len(labels):
                continue
            dist = system.outcome_distribution(labels)
            p = dist.consistency_failure_probability()
            if p > TOL.audit_probability:
                violations.append((labels, p))
    return violations


def length2_reduction_check(
    system,
    pair: tuple[str, str],
    preparations=None,
    tol: float = 1e-9,
) -> bool:
    """Check compatibility through length-2 statistics only.

    For every preparation in the depth-3 measure-and-postselect closure of
    the given list: repeats agree perfectly and the mean of each label is
    unchanged by one preceding measurement of the other. Additionally the
    induction consequence is verified on the base preparations: appending a
    label to any sequence over the pair up to length 3 leaves its mean at
    the unconditioned value.
    """
    a, b = pair
    if preparations is None:
        bases = [("base", system)]
    else:
        bases = _named_preparations(system, preparations)

    closure = list(bases)
    frontier = list(bases)
    for _ in range(3):
        extended = []
        for name, prepared in frontier:
            for label in pair:
                dist = prepared.outcome_distribution((label,))
                for outcome in (1, -1):
                    if dist.probs.get((outcome,), 0.0) <= TOL.prune_probability:
                        continue
                    try:
                        extended.append(
                            (f"{name}>{label}={outcome:+d}", prepared.postselect(label, outcome))
                        )
                    except NotFiniteSupport:
                        return _length2_base_only(bases, pair, tol)
        closure.extend(extended)
        frontier = extended

    for _, prepared in closure:
        for x, y in ((a, b), (b, a)):
            if abs(prepared.outcome_distribution((x, x)).product_mean() - 1.0) > tol:
                return False
            plain = prepared.outcome_distribution((x,)).marginal_mean(1)
            repeat = prepared.outcome_distribution((x, x)).marginal_mean(2)
            crossed = prepared.outcome_distribution((y, x)).marginal_mean(2)
            if abs(plain - repeat) > tol or abs(plain - crossed) > tol:
                return False

    for _, prepared in bases:
        for x in pair:
            plain = prepared.outcome_distribution((x,)).marginal_mean(1)
            for length in range(1, 4):
                for prefix in product(pair, repeat=length):
                    labels = prefix + (x,)
                    tail = prepared.outcome_distribution(labels).marginal_mean(len(labels))
                    if abs(tail - plain) > tol:
                        return False
    return True


def _length2_base_only(bases, pair, tol: float) -> bool:
    a, b = pair
    for _, prepared in bases:
        for x, y in ((a, b), (b, a)):
            if abs(prepared.outcome_distribution((x, x)).product_mean() - 1.0) > tol:
                return False
            plain = prepared.outcome_distribution((x,)).marginal_mean(1)
            repeat = prepared.outcome_distribution((x, x)).marginal_mean(2)
            crossed = prepared.outcome_distribution((y, x)).marginal_mean(2)
            if abs(plain - repeat) > tol or abs(plain - crossed) > tol:
                return False
    return True


# ---------------------------------------------------------------------------
# counterfactual flip probabilities (hidden-variable systems only)


def _require_finite_hv(system, length: int):
    if not isinstance(system, HVSystem):
        raise CounterfactualsUnavailable(
            "counterfactual flip probabilities are undefined for quantum systems"
        )
    support = getattr(system.distribution, "support", None)
    points = support(length) if support is not None else None
    if points is None:
        raise NotFiniteSupport("flip probabilities need a finitely enumerable preparation")
    return points


def _thread(model: HVModel, state, labels):
    values = []
    current = state
    for label in labels:
        value, current = model.measure(current, label)
        values.append(value)
    return values


def p_flip(system, first: str, second: str) -> FlipReport:
    """Probability that measuring ``first`` beforehand flips the value
    ``second`` would otherwise have shown."""
    try:
        points = _require_finite_hv(system, 2)
    except CounterfactualsUnavailable:
        return FlipReport(subject=f"flip[{first}{second}]", p_flip=None, computable=False)
    total = 0.0
    for state, weight in points:
        alone = _thread(system.model, state, (second,))[0]
        after = _thread(system.model, state, (first, second))[1]
        if alone != after:
            total += weight
    return FlipReport(subject=f"flip[{first}{second}]", p_flip=total, computable=True)


def p_flip_pair_then(system, first: str, second: str, third: str) -> FlipReport:
    """Probability that measuring the pair beforehand flips the value the
    third observable would otherwise have shown."""
    try:
        points = _require_finite_hv(system, 3)
    except CounterfactualsUnavailable:
        return FlipReport(
            subject=f"flip[({first}{second}){third}]", p_flip=None, computable=False
        )
    total = 0.0
    for state, weight in points:
        alone = _thread(system.model, state, (third,))[0]
        after = _thread(system.model, state, (first, second, third))[2]
        if alone != after:
            total += weight
    return FlipReport(subject=f"flip[({first}{second}){third}]", p_flip=total, computable=True)


def reports_to_csv(reports) -> str:
    """Flat CSV with one row per report."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["subject", "value", "standard_error", "n_trials", "source"])
    for report in reports:
        if isinstance(report, DisturbanceReport):
            writer.writerow(
                [report.subject, report.p_err, report.standard_error, report.n_trials, report.source]
            )
        elif isinstance(report, EpsilonReport):
            writer.writerow(
                [
                    f"epsilon[{report.pair[0]}{report.pair[1]}]",
                    report.epsilon,
                    report.standard_error,
                    report.n_trials,
                    report.source,
                ]
            )
        elif isinstance(report, FlipReport):
            writer.writerow(
                [report.subject, "" if report.p_flip is None else report.p_flip, 0.0, 0, report.source]
            )
        else:
            raise TypeError(f"unknown report type {type(report)!r}")
    return buffer.getvalue()
