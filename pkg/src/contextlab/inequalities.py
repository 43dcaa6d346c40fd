"""Inequality functionals, their imperfect-compatibility bounds, and verdicts.

Three families are covered: the four-term cyclic correlation functional on
pairwise compatible pairs (classical bound 2, quantum value 2*sqrt(2)), the
five-term pentagram functional on a three-level system (classical bound -3,
quantum minimum 5 - 4*sqrt(5)), and the six-context square functional
(classical bound 4, quantum value 6 for every state). Each comes with
corrected bounds built from measurable disturbance terms, plus the exact
counterfactual bound that only hidden-variable models can be tested against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product
from typing import Mapping, Sequence

from .compat import epsilon_pair, p_err_s3, p_err_sandwich, p_flip, p_flip_pair_then
from .errors import CounterfactualsUnavailable
from .systems import HVSystem
from .tolerances import TOL

CHSH_EDGES = (("A", "B"), ("C", "B"), ("C", "D"), ("A", "D"))
KCBS_EDGES = (("A", "B"), ("C", "B"), ("C", "D"), ("E", "D"), ("E", "A"))

KS_FEASIBILITY_THRESHOLD = 2.0 / 48.0


@dataclass(frozen=True)
class InequalityResult:
    kind: str
    functional: str
    chi: float
    standard_error: float
    bound: float
    bound_standard_error: float
    correction_terms: Mapping[str, float]
    verdict: str
    source: str
    n_trials: int = 0
    details: Mapping[str, object] = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "kind": self.kind,
            "functional": self.functional,
            "chi": self.chi,
            "standard_error": self.standard_error,
            "bound": self.bound,
            "bound_standard_error": self.bound_standard_error,
            "correction_terms": dict(self.correction_terms),
            "verdict": self.verdict,
            "source": self.source,
            "n_trials": self.n_trials,
            "details": {k: v for k, v in self.details.items()},
        }


def _verdict(margin: float, margin_se: float, exact: bool) -> str:
    if exact:
        return "violates" if margin > TOL.exact_verdict else "satisfies"
    if margin > 3.0 * margin_se:
        return "violates"
    if margin <= 0.0:
        return "satisfies"
    return "inconclusive"


def _edges(system, default: tuple[tuple[str, ...], ...]) -> tuple[tuple[str, ...], ...]:
    obs_set = getattr(system, "observable_set", None)
    if obs_set is not None:
        return obs_set.compatibility_edges
    return default


def _sequence_means(system, sequences):
    means, variances, n_trials, exact = [], 0.0, 0, True
    for labels in sequences:
        dist = system.outcome_distribution(tuple(labels))
        mean = dist.product_mean()
        means.append(mean)
        variances += dist.mean_se(mean) ** 2
        n_trials = max(n_trials, dist.n_trials)
        exact = exact and dist.exact
    return means, math.sqrt(variances), n_trials, exact


def _chsh_chi(system):
    edges = _edges(system, CHSH_EDGES)
    means, se, n_trials, exact = _sequence_means(system, edges)
    chi = means[0] + means[1] + means[2] - means[3]
    return chi, se, n_trials, exact


def chsh_sequential(system) -> InequalityResult:
    """Plain four-term functional against the assignment bound of 2."""
    chi, se, n_trials, exact = _chsh_chi(system)
    margin = abs(chi) - 2.0
    return InequalityResult(
        kind="CHSH",
        functional="|<A1B2> + <C1B2> + <C1D2> - <A1D2>|",
        chi=chi,
        standard_error=se,
        bound=2.0,
        bound_standard_error=0.0,
        correction_terms={},
        verdict=_verdict(margin, se, exact),
        source="exact" if exact else "monte_carlo",
        n_trials=n_trials,
    )


def chsh_noise2(system) -> InequalityResult:
    """Bound corrected by the four sandwich disturbance probabilities."""
    chi, se, n_trials, exact = _chsh_chi(system)
    edges = _edges(system, CHSH_EDGES)
    corrections: dict[str, float] = {}
    bound_variance = 0.0
    for first, second in edges:
        report = p_err_sandwich(system, second, first)
        corrections[f"p_err[{report.subject}]"] = report.p_err
        bound_variance += (2.0 * report.standard_error) ** 2
        n_trials = max(n_trials, report.n_trials)
        exact = exact and report.source == "exact"
    bound = 2.0 * (1.0 + sum(corrections.values()))
    bound_se = math.sqrt(bound_variance)
    margin = abs(chi) - bound
    margin_se = math.sqrt(se**2 + bound_se**2)
    return InequalityResult(
        kind="CHSH",
        functional="|X| <= 2 (1 + sum of sandwich disturbance terms)",
        chi=chi,
        standard_error=se,
        bound=bound,
        bound_standard_error=bound_se,
        correction_terms=corrections,
        verdict=_verdict(margin, margin_se, exact),
        source="exact" if exact else "monte_carlo",
        n_trials=n_trials,
    )


def chsh_stoch(system) -> InequalityResult:
    """Bound corrected by the summed length-3 disturbance of each pair."""
    chi, se, n_trials, exact = _chsh_chi(system)
    edges = _edges(system, CHSH_EDGES)
    corrections: dict[str, float] = {}
    bound_variance = 0.0
    for first, second in edges:
        report = p_err_s3(system, first, second)
        corrections[f"p_err[{report.subject}]"] = report.p_err
        bound_variance += (2.0 * report.standard_error) ** 2
        n_trials = max(n_trials, report.n_trials)
        exact = exact and report.source == "exact"
    bound = 2.0 * (1.0 + sum(corrections.values()))
    bound_se = math.sqrt(bound_variance)
    margin = abs(chi) - bound
    margin_se = math.sqrt(se**2 + bound_se**2)
    return InequalityResult(
        kind="CHSH",
        functional="|X| <= 2 (1 + sum of all-length-3 disturbance terms)",
        chi=chi,
        standard_error=se,
        bound=bound,
        bound_standard_error=bound_se,
        correction_terms=corrections,
        verdict=_verdict(margin, margin_se, exact),
        source="exact" if exact else "monte_carlo",
        n_trials=n_trials,
    )


def chsh_epsilon(system, preparations) -> InequalityResult:
    """One-sided bound corrected by the worst-case mean shifts."""
    chi, se, n_trials, exact = _chsh_chi(system)
    edges = _edges(system, CHSH_EDGES)
    corrections: dict[str, float] = {}
    bound_variance = 0.0
    for first, second in edges:
        report = epsilon_pair(system, first, second, preparations)
        corrections[f"epsilon[{first}{second}]"] = report.epsilon
        bound_variance += report.standard_error**2
        n_trials = max(n_trials, report.n_trials)
        exact = exact and report.source == "exact"
    bound = 2.0 + sum(corrections.values())
    bound_se = math.sqrt(bound_variance)
    margin = chi - bound
    margin_se = math.sqrt(se**2 + bound_se**2)
    return InequalityResult(
        kind="CHSH",
        functional="X <= 2 + sum of epsilon terms",
        chi=chi,
        standard_error=se,
        bound=bound,
        bound_standard_error=bound_se,
        correction_terms=corrections,
        verdict=_verdict(margin, margin_se, exact),
        source="exact" if exact else "monte_carlo",
        n_trials=n_trials,
    )


def kcbs_sequential(system, variant: str = "plain", preparations=None) -> InequalityResult:
    """Five-edge pentagram functional; violation means falling below the
    bound of -3 (minus the epsilon corrections in the epsilon variant)."""
    if variant not in ("plain", "epsilon"):
        raise ValueError(f"variant must be 'plain' or 'epsilon', got {variant!r}")
    edges = _edges(system, KCBS_EDGES)
    means, se, n_trials, exact = _sequence_means(system, edges)
    chi = sum(means)
    corrections: dict[str, float] = {}
    bound_variance = 0.0
    if variant == "epsilon":
        preparations = preparations if preparations is not None else _self_preparation(system)
        for first, second in edges:
            report = epsilon_pair(system, first, second, preparations)
            corrections[f"epsilon[{first}{second}]"] = report.epsilon
            bound_variance += report.standard_error**2
            n_trials = max(n_trials, report.n_trials)
            exact = exact and report.source == "exact"
    bound = -3.0 - sum(corrections.values())
    bound_se = math.sqrt(bound_variance)
    margin = bound - chi
    margin_se = math.sqrt(se**2 + bound_se**2)
    return InequalityResult(
        kind="KCBS",
        functional="X >= -3 - sum of epsilon terms" if corrections else "X >= -3",
        chi=chi,
        standard_error=se,
        bound=bound,
        bound_standard_error=bound_se,
        correction_terms=corrections,
        verdict=_verdict(margin, margin_se, exact),
        source="exact" if exact else "monte_carlo",
        n_trials=n_trials,
    )


def _self_preparation(system):
    if isinstance(system, HVSystem):
        return [(system.name, system)]
    return [(getattr(system, "name", "base"), system)]


def ks_sequential(system, variant: str = "plain") -> InequalityResult:
    """Six-context square functional; the last context enters negatively.

    The extended variant assembles, per context, a sandwich disturbance
    bound for the first measured pair and a length-4 disturbance bound for
    the pair followed by the third observable, each entering the bound with
    weight 4. It also reports whether the observed mean correction is small
    enough (below 2/48) for a violation to remain possible at all.
    """
    if variant not in ("plain", "extended"):
        raise ValueError(f"variant must be 'plain' or 'extended', got {variant!r}")
    contexts = _edges(system, None)
    if contexts is None or len(contexts) != 6:
        raise ValueError("square evaluation needs the six declared contexts")
    means, se, n_trials, exact = _sequence_means(system, contexts)
    chi = sum(means[:5]) - means[5]
    corrections: dict[str, float] = {}
    bound_variance = 0.0
    details: dict[str, object] = {}
    if variant == "extended":
        for first, second, third in contexts:
            sandwich = p_err_sandwich(system, second, first)
            corrections[f"p_err[{sandwich.subject}]"] = sandwich.p_err
            bound_variance += (4.0 * sandwich.standard_error) ** 2
            dist = system.outcome_distribution((third, first, second, third))
            p_long = dist.probability(lambda o: o[0] != o[3])
            corrections[f"p_err[{third}1{first}2{second}3{third}4]"] = p_long
            bound_variance += (4.0 * dist.probability_se(p_long)) ** 2
            n_trials = max(n_trials, dist.n_trials, sandwich.n_trials)
            exact = exact and dist.exact and sandwich.source == "exact"
        mean_correction = sum(corrections.values()) / len(corrections)
        details["mean_correction"] = mean_correction
        details["feasibility_threshold"] = KS_FEASIBILITY_THRESHOLD
        details["violation_feasible"] = bool(mean_correction < KS_FEASIBILITY_THRESHOLD)
    bound = 4.0 + 4.0 * sum(corrections.values())
    bound_se = math.sqrt(bound_variance)
    margin = chi - bound
    margin_se = math.sqrt(se**2 + bound_se**2)
    return InequalityResult(
        kind="KS",
        functional=(
            "X <= 4 + 4 sum of per-context disturbance terms"
            if variant == "extended"
            else "X <= 4"
        ),
        chi=chi,
        standard_error=se,
        bound=bound,
        bound_standard_error=bound_se,
        correction_terms=corrections,
        verdict=_verdict(margin, margin_se, exact),
        source="exact" if exact else "monte_carlo",
        n_trials=n_trials,
        details=details,
    )


def ks_extension_feasible(mean_correction: float) -> bool:
    """A violation of the corrected square bound needs the average
    disturbance term to stay below 2/48."""
    return mean_correction < KS_FEASIBILITY_THRESHOLD


def flip_sandwich_bounds(system, labels: Sequence[str]) -> tuple[float, float]:
    """Exact interval for the counterfactual joint mean of a compatible pair
    (or context triple), from directly evaluated flip probabilities.

    Only hidden-variable systems with finitely enumerable preparations admit
    this evaluation; quantum systems raise, since the counterfactual values
    are undefined there.
    """
    labels = tuple(labels)
    if not isinstance(system, HVSystem):
        raise CounterfactualsUnavailable(
            "counterfactual bounds are only evaluable for hidden-variable systems"
        )
    if len(labels) == 2:
        first, second = labels
        flip = p_flip(system, first, second)
        width = 2.0 * (flip.p_flip or 0.0)
    elif len(labels) == 3:
        first, second, third = labels
        flip_pair = p_flip(system, first, second)
        flip_third = p_flip_pair_then(system, first, second, third)
        width = 4.0 * (flip_pair.p_flip or 0.0) + 4.0 * (flip_third.p_flip or 0.0)
    else:
        raise ValueError("bounds are defined for pairs and triples only")
    center = system.outcome_distribution(labels).product_mean()
    return center - width, center + width


def chsh_universal_bound(system) -> tuple[float, float]:
    """Directly evaluated functional and its flip-corrected bound,
    2 (1 + sum of flip probabilities). Holds for every hidden-variable
    model; finite support makes both sides computable."""
    edges = _edges(system, CHSH_EDGES)
    chi, _, _, _ = _chsh_chi(system)
    total = 0.0
    for first, second in edges:
        flip = p_flip(system, first, second)
        if not flip.computable:
            raise CounterfactualsUnavailable("universal bound needs computable flips")
        total += flip.p_flip or 0.0
    return chi, 2.0 * (1.0 + total)


# ---------------------------------------------------------------------------
# exhaustive classical baselines


def classical_chsh_extrema() -> tuple[float, float]:
    """Extrema of the four-term functional over all 16 sign tables."""
    lo, hi = math.inf, -math.inf
    for a, b, c, d in product((1, -1), repeat=4):
        chi = a * b + c * b + c * d - a * d
        lo, hi = min(lo, chi), max(hi, chi)
    return lo, hi


def classical_kcbs_minimum() -> float:
    """Minimum of the five-edge pentagram functional over all 32 tables."""
    best = math.inf
    for signs in product((1, -1), repeat=5):
        a, b, c, d, e = signs
        best = min(best, a * b + c * b + c * d + e * d + e * a)
    return best


def classical_ks_maximum() -> float:
    """Maximum of the square functional over all 512 sign tables."""
    best = -math.inf
    for signs in product((1, -1), repeat=9):
        a, b, c, aa, bb, cc, al, be, ga = signs
        chi = (
            a * b * c
            + aa * bb * cc
            + al * be * ga
            + a * aa * al
            + b * bb * be
            - c * cc * ga
        )
        best = max(best, chi)
    return best
