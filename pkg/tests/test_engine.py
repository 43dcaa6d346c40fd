import math

import numpy as np
import pytest

from contextlab.catalog import load_set, load_state
from contextlab.engine import (
    MeasurementSequence,
    Observable,
    QuantumState,
    branch_table,
    conditional_mean,
    lueders_update,
    sample_sequence,
    sequence_mean,
)
from contextlab.errors import (
    DimensionMismatch,
    PositionOutOfRange,
    SequenceTooLong,
    UnknownLabel,
    ZeroProbabilityBranch,
)

from conftest import random_pure_state

INV_SQRT2 = 1.0 / math.sqrt(2.0)

CHSH = load_set("chsh_entangled")
SQUARE = load_set("mermin_peres")
ZERO_ZERO = QuantumState.pure([1, 0, 0, 0])
PHI_PLUS = load_state("phi_plus").state
FIG2 = load_state("fig2_psi").state
MAX_MIXED = load_state("max_mixed_2q").state


class TestLuedersUpdate:
    def test_eigenstate_unchanged(self):
        p, post = lueders_update(ZERO_ZERO, SQUARE.observables["A"], 1)
        assert p == pytest.approx(1.0, abs=1e-12)
        assert post.overlaps(ZERO_ZERO, tol=1e-12)

    def test_born_rule_on_bell_state(self):
        p, post = lueders_update(PHI_PLUS, SQUARE.observables["A"], 1)
        assert p == pytest.approx(0.5, abs=1e-12)
        assert post.overlaps(ZERO_ZERO, tol=1e-12)

    def test_partially_entangled_state_projects_evenly(self):
        # the minus branch of the two-body z correlation lands on the
        # symmetric superposition of |01> and |10>
        p, post = lueders_update(FIG2, SQUARE.observables["C"], -1)
        assert p == pytest.approx(0.5, abs=1e-12)
        expected = QuantumState.pure([0, INV_SQRT2, INV_SQRT2, 0])
        assert post.overlaps(expected, tol=1e-10)

    def test_zero_probability_branch_raises(self):
        with pytest.raises(ZeroProbabilityBranch):
            lueders_update(ZERO_ZERO, SQUARE.observables["A"], -1)

    def test_dimension_mismatch_raises(self):
        qutrit = QuantumState.pure([1, 0, 0])
        with pytest.raises(DimensionMismatch):
            lueders_update(qutrit, SQUARE.observables["A"], 1)

    def test_purity_preserved_on_random_states(self, rng):
        for _ in range(100):
            state = random_pure_state(4, rng)
            label = rng.choice(list(SQUARE.observables))
            obs = SQUARE.observables[label]
            p_plus = state.expectation(obs.plus_projector)
            outcome = 1 if p_plus > 0.5 else -1
            _, post = lueders_update(state, obs, outcome)
            assert post.is_pure
            assert np.linalg.norm(post.vector) == pytest.approx(1.0, abs=1e-12)

    def test_mixed_state_update(self):
        p, post = lueders_update(MAX_MIXED, SQUARE.observables["C"], 1)
        assert p == pytest.approx(0.5, abs=1e-12)
        assert not post.is_pure
        assert np.trace(post.density()).real == pytest.approx(1.0, abs=1e-12)


class TestBranchTable:
    def test_single_observable_has_born_branches(self):
        table = branch_table(PHI_PLUS, ("A",), SQUARE.observables)
        assert table.probability_of((1,)) == pytest.approx(0.5, abs=1e-12)
        assert table.probability_of((-1,)) == pytest.approx(0.5, abs=1e-12)

    def test_last_column_product_is_always_minus_one(self):
        table = branch_table(FIG2, ("C", "c", "gamma"), SQUARE.observables)
        for branch in table.branches:
            assert np.prod(branch.outcomes) == -1

    def test_repeated_measurement_never_disagrees(self):
        for label in ("A", "c", "gamma"):
            table = branch_table(MAX_MIXED, (label, label), SQUARE.observables)
            assert table.probability_of((1, -1)) == 0.0
            assert table.probability_of((-1, 1)) == 0.0

    def test_normalization_over_random_states(self, rng):
        labels = list(SQUARE.observables)
        for _ in range(100):
            state = random_pure_state(4, rng)
            seq = tuple(rng.choice(labels, size=3))
            table = branch_table(state, seq, SQUARE.observables)
            assert sum(b.probability for b in table.branches) == pytest.approx(1.0, abs=1e-9)

    def test_too_long_sequence_rejected(self):
        with pytest.raises(SequenceTooLong):
            branch_table(PHI_PLUS, ("A",) * 13, SQUARE.observables)

    def test_unknown_label_rejected(self):
        with pytest.raises(UnknownLabel):
            branch_table(PHI_PLUS, ("nope",), SQUARE.observables)


class TestSequenceMeans:
    def test_bell_state_edge_mean_matches_operator_product(self):
        # commuting pair, so the sequence mean equals tr(rho A B)
        a = CHSH.observables["A"].operator
        b = CHSH.observables["B"].operator
        oracle = float(np.real(np.trace(PHI_PLUS.density() @ a @ b)))
        value = sequence_mean(PHI_PLUS, ("A", "B"), CHSH.observables)
        assert oracle == pytest.approx(INV_SQRT2, abs=1e-12)
        assert value == pytest.approx(oracle, abs=1e-12)

    def test_row_product_is_plus_one_for_any_state(self, rng):
        for state in (PHI_PLUS, FIG2, MAX_MIXED, random_pure_state(4, rng)):
            assert sequence_mean(state, ("A", "B", "C"), SQUARE.observables) == pytest.approx(
                1.0, abs=1e-10
            )

    def test_last_column_product_is_minus_one_for_any_state(self, rng):
        for state in (PHI_PLUS, FIG2, MAX_MIXED, random_pure_state(4, rng)):
            assert sequence_mean(state, ("C", "c", "gamma"), SQUARE.observables) == pytest.approx(
                -1.0, abs=1e-10
            )

    def test_conditional_mean_positions(self):
        assert conditional_mean(FIG2, ("C", "c", "gamma"), 1, SQUARE.observables) == pytest.approx(
            0.0, abs=1e-12
        )
        assert conditional_mean(ZERO_ZERO, ("A", "A"), 2, SQUARE.observables) == pytest.approx(
            1.0, abs=1e-12
        )
        assert conditional_mean(MAX_MIXED, ("B", "A"), 1, SQUARE.observables) == pytest.approx(
            0.0, abs=1e-12
        )

    def test_position_out_of_range(self):
        with pytest.raises(PositionOutOfRange):
            conditional_mean(PHI_PLUS, ("A", "B"), 3, SQUARE.observables)

    def test_commuting_pairs_are_order_independent(self, rng):
        for obs_set in (CHSH, load_set("chsh_product"), load_set("kcbs_pentagram")):
            for edge in obs_set.compatibility_edges:
                first, second = edge[0], edge[1]
                state = random_pure_state(obs_set.dim, rng)
                forward = sequence_mean(state, (first, second), obs_set.observables)
                backward = sequence_mean(state, (second, first), obs_set.observables)
                assert forward == pytest.approx(backward, abs=1e-10)


class TestSampling:
    def test_eigenstate_always_plus(self, rng):
        for _ in range(50):
            record = sample_sequence(ZERO_ZERO, ("A",), SQUARE.observables, rng)
            assert record.values == (1,)

    def test_identical_seeds_give_identical_streams(self):
        rng_a = np.random.default_rng(99)
        rng_b = np.random.default_rng(99)
        for _ in range(200):
            rec_a = sample_sequence(PHI_PLUS, ("A", "B", "C"), SQUARE.observables, rng_a)
            rec_b = sample_sequence(PHI_PLUS, ("A", "B", "C"), SQUARE.observables, rng_b)
            assert rec_a == rec_b

    def test_empirical_mean_within_four_sigma(self, rng):
        n = 100_000
        total = 0
        for _ in range(n):
            record = sample_sequence(PHI_PLUS, ("A", "B"), CHSH.observables, rng)
            total += record.product()
        empirical = total / n
        sigma = math.sqrt(0.5 / n)
        assert abs(empirical - INV_SQRT2) < 4 * sigma


class TestMeasurementSequence:
    def test_parse_and_str_roundtrip(self):
        seq = MeasurementSequence.parse("C, c, gamma")
        assert seq.steps == ("C", "c", "gamma")
        assert str(seq) == "C,c,gamma"

    def test_length_bounds(self):
        with pytest.raises(SequenceTooLong):
            MeasurementSequence(())
        with pytest.raises(SequenceTooLong):
            MeasurementSequence(("A",) * 13)


class TestObservable:
    def test_from_operator_roundtrip(self):
        obs = SQUARE.observables["gamma"]
        rebuilt = Observable.from_operator("gamma", obs.operator)
        assert np.allclose(rebuilt.plus_projector, obs.plus_projector, atol=1e-12)

    def test_non_involution_rejected(self):
        with pytest.raises(ValueError):
            Observable.from_operator("bad", np.diag([1.0, 0.5, 1.0, 1.0]))

    def test_non_projector_rejected(self):
        with pytest.raises(ValueError):
            Observable(label="bad", dim=2, plus_projector=np.array([[0.5, 0], [0, 0.5]]))


class TestQuantumState:
    def test_norm_validation(self):
        with pytest.raises(ValueError):
            QuantumState.pure([1, 1])

    def test_density_validation(self):
        with pytest.raises(ValueError):
            QuantumState.mixed(np.diag([0.7, 0.7, -0.4, 0.0]))
        with pytest.raises(ValueError):
            QuantumState.mixed(np.diag([0.9, 0.3, -0.2, 0.0]))
