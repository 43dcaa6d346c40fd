import math
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from contextlab.catalog import load_set, load_state
from contextlab.compat import default_quantum_preparations
from contextlab.errors import CounterfactualsUnavailable
from contextlab.hvmodels import (
    LockingModel,
    MeanResamplerModel,
    ResamplerEnsemble,
    locking_initial_distribution,
    make_model,
)
from contextlab.inequalities import (
    chsh_epsilon,
    chsh_noise2,
    chsh_sequential,
    chsh_stoch,
    chsh_universal_bound,
    classical_chsh_extrema,
    classical_kcbs_minimum,
    classical_ks_maximum,
    flip_sandwich_bounds,
    kcbs_sequential,
    ks_extension_feasible,
    ks_sequential,
)
from contextlab.systems import HVSystem, QuantumSystem

TWO_SQRT2 = 2.0 * math.sqrt(2.0)
KCBS_TARGET = 5.0 - 4.0 * math.sqrt(5.0)


def quantum(set_name, state_name):
    return QuantumSystem(load_state(state_name).state, load_set(set_name))


def locking_system():
    return HVSystem(LockingModel(), locking_initial_distribution())


class TestQuantumTargets:
    def test_chsh_reaches_two_sqrt_two_on_both_sets(self):
        for set_name, state_name in (
            ("chsh_entangled", "phi_plus"),
            ("chsh_product", "x_plus_zero"),
        ):
            result = chsh_sequential(quantum(set_name, state_name))
            assert result.chi == pytest.approx(TWO_SQRT2, abs=1e-9)
            assert result.verdict == "violates"
            assert result.source == "exact"

    def test_square_reaches_six_on_every_catalog_state(self):
        for state_name in ("phi_plus", "x_plus_zero", "fig2_psi", "singlet", "max_mixed_2q"):
            result = ks_sequential(quantum("mermin_peres", state_name))
            assert result.chi == pytest.approx(6.0, abs=1e-10)
            assert result.verdict == "violates"

    def test_pentagram_reaches_quantum_minimum(self):
        result = kcbs_sequential(quantum("kcbs_pentagram", "kcbs_optimal"))
        assert result.chi == pytest.approx(KCBS_TARGET, abs=1e-9)
        assert result.verdict == "violates"

    def test_pentagram_mixed_state_satisfies(self):
        result = kcbs_sequential(quantum("kcbs_pentagram", "max_mixed_qutrit"))
        assert result.chi >= -3.0
        assert result.verdict == "satisfies"


class TestClassicalExhaustion:
    def test_chsh_extrema_from_sixteen_tables(self):
        lo, hi = classical_chsh_extrema()
        assert (lo, hi) == (-2.0, 2.0)

    def test_kcbs_minimum_from_thirty_two_tables(self):
        assert classical_kcbs_minimum() == -3.0

    def test_ks_maximum_from_five_hundred_twelve_tables(self):
        assert classical_ks_maximum() == 4.0

    @given(st.tuples(*(st.sampled_from((1, -1)) for _ in range(4))))
    @settings(max_examples=16, deadline=None)
    def test_any_fixed_assignment_respects_the_chsh_bound(self, signs):
        a, b, c, d = signs
        assert abs(a * b + c * b + c * d - a * d) <= 2


class TestCorrectedBounds:
    def test_ideal_quantum_noise2_reduces_to_plain(self):
        result = chsh_noise2(quantum("chsh_entangled", "phi_plus"))
        assert result.bound == pytest.approx(2.0, abs=1e-12)
        assert all(v == 0.0 for v in result.correction_terms.values())
        assert result.chi == pytest.approx(TWO_SQRT2, abs=1e-9)

    def test_ideal_quantum_stoch_corrections_vanish(self):
        result = chsh_stoch(quantum("chsh_entangled", "phi_plus"))
        assert result.bound == pytest.approx(2.0, abs=1e-12)
        assert result.verdict == "violates"

    def test_stoch_bound_dominates_noise2_bound(self):
        # the summed length-3 error includes the sandwich term, so the wider
        # bound can only be larger on the same data
        systems = [
            HVSystem(MeanResamplerModel(("A", "B", "C", "D")),
                     ResamplerEnsemble("r4", ("A", "B", "C", "D"))),
            HVSystem(*make_model("noncontextual_assignment",
                                 {"labels": ["A", "B", "C", "D"], "flip_probability": 0.06})),
        ]
        for system in systems:
            assert chsh_stoch(system).bound >= chsh_noise2(system).bound - 1e-12

    def test_chsh_epsilon_quantum_exact(self):
        system = quantum("chsh_entangled", "phi_plus")
        preparations = default_quantum_preparations(
            system, ("A", "B"), [load_state(n) for n in ("phi_plus", "max_mixed_2q")]
        )
        result = chsh_epsilon(system, preparations)
        assert result.bound == pytest.approx(2.0, abs=1e-10)
        assert result.verdict == "violates"

    def test_chsh_epsilon_flip_noise_satisfies(self):
        system = HVSystem(*make_model(
            "noncontextual_assignment", {"labels": ["A", "B", "C", "D"], "flip_probability": 0.05}
        ))
        result = chsh_epsilon(system, [("tables", system)])
        assert abs(result.chi) < result.bound
        assert result.verdict == "satisfies"


class TestLockingModelResults:
    def test_noise2_maximal_violation(self):
        result = chsh_noise2(locking_system())
        assert result.chi == 4.0
        assert result.bound == 2.0
        assert all(v == 0.0 for v in result.correction_terms.values())
        assert result.verdict == "violates"
        assert result.source == "exact"

    def test_stoch_corrections_also_vanish(self):
        result = chsh_stoch(locking_system())
        assert result.chi == 4.0
        assert result.bound == 2.0

    def test_epsilon_terms_vanish_yet_chi_is_maximal(self):
        system = locking_system()
        result = chsh_epsilon(system, [("half_half", system)])
        assert result.bound == pytest.approx(2.0, abs=1e-15)
        assert result.chi == 4.0
        assert result.verdict == "violates"

    def test_universal_bound_is_saturated(self):
        chi, bound = chsh_universal_bound(locking_system())
        assert chi == 4.0
        assert bound == 4.0


class TestFlipSandwichBounds:
    def test_locking_pair_ad_interval(self):
        low, high = flip_sandwich_bounds(locking_system(), ("A", "D"))
        assert (low, high) == (-3.0, 1.0)

    def test_locking_pair_ab_degenerate_interval(self):
        low, high = flip_sandwich_bounds(locking_system(), ("A", "B"))
        assert low == high == 1.0

    def test_triple_interval_degenerate_when_nothing_flips(self):
        # B and C have no side effects, so the counterfactual triple mean is
        # pinned at the sequential value (0 under the symmetric preparation)
        low, high = flip_sandwich_bounds(locking_system(), ("B", "C", "A"))
        assert (low, high) == (0.0, 0.0)

    def test_quantum_systems_refuse(self):
        with pytest.raises(CounterfactualsUnavailable):
            flip_sandwich_bounds(quantum("chsh_entangled", "phi_plus"), ("A", "B"))

    def test_universal_bound_holds_for_finite_models(self):
        systems = [
            locking_system(),
            HVSystem(*make_model("noncontextual_assignment", {"labels": ["A", "B", "C", "D"]})),
            HVSystem(*make_model(
                "noncontextual_assignment",
                {"labels": ["A", "B", "C", "D"], "flip_probability": 0.11},
            )),
            HVSystem(MeanResamplerModel(("A", "B", "C", "D")),
                     ResamplerEnsemble("r4", ("A", "B", "C", "D"), mean=0.3)),
        ]
        for system in systems:
            chi, bound = chsh_universal_bound(system)
            assert abs(chi) <= bound + 1e-12


class TestSquareExtended:
    def test_ideal_quantum_extended_corrections_vanish(self):
        result = ks_sequential(quantum("mermin_peres", "fig2_psi"), variant="extended")
        assert result.bound == pytest.approx(4.0, abs=1e-12)
        assert result.details["violation_feasible"] is True
        assert result.details["mean_correction"] == pytest.approx(0.0, abs=1e-12)

    def test_feasibility_threshold(self):
        assert ks_extension_feasible(0.01)
        assert not ks_extension_feasible(0.05)
        reported_mean = (6 * 0.06 + 6 * 0.1) / 12.0
        assert not ks_extension_feasible(reported_mean)

    def test_ledger_has_twelve_terms(self):
        result = ks_sequential(quantum("mermin_peres", "max_mixed_2q"), variant="extended")
        assert len(result.correction_terms) == 12


class TestVerdicts:
    def test_assignment_tables_satisfy_plain_bound(self):
        for table in product((1, -1), repeat=4):
            system = HVSystem(*make_model(
                "noncontextual_assignment",
                {"labels": ["A", "B", "C", "D"], "table": dict(zip("ABCD", table))},
            ))
            result = chsh_sequential(system)
            assert abs(result.chi) <= 2.0
            assert result.verdict in ("satisfies", "inconclusive")

    def test_exact_results_have_zero_errors(self):
        result = chsh_sequential(quantum("chsh_entangled", "phi_plus"))
        assert result.standard_error == 0.0
        assert result.bound_standard_error == 0.0

    def test_json_payload_shape(self):
        result = chsh_noise2(quantum("chsh_entangled", "phi_plus"))
        payload = result.to_json_dict()
        assert set(payload) >= {
            "kind", "chi", "standard_error", "bound", "correction_terms", "verdict", "source"
        }
