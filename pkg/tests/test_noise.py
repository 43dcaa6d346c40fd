import dataclasses
import math

import numpy as np
import pytest

from contextlab.catalog import load_set, load_state
from contextlab.engine import Observable, QuantumState, branch_table
from contextlab.errors import UnsupportedDimension
from contextlab.noise import (
    NoiseConfig,
    NoisySystem,
    noisy_batch,
    noisy_record_distribution,
    noisy_sequence_sample,
    plan_for,
    repeated_measurement_table,
    replicate_headlines,
    replicate_tables,
)

from conftest import random_pure_state

SQUARE = load_set("mermin_peres")
FIG2 = load_state("fig2_psi").state
MAX_MIXED = load_state("max_mixed_2q").state

PAPER_TABLE_Z1 = {
    (1, 2): 0.97, (1, 3): 0.97, (1, 4): 0.96, (1, 5): 0.95,
    (2, 3): 0.97, (2, 4): 0.97, (2, 5): 0.96,
    (3, 4): 0.98, (3, 5): 0.98,
    (4, 5): 0.98,
}


class TestPlans:
    def test_plan_classification(self):
        plan_a = plan_for(SQUARE.observables["A"])  # z on the first qubit
        assert not plan_a.requires_entangling_map
        assert plan_a.measured_qubit == 0 and plan_a.idle_qubit == 1
        plan_b = plan_for(SQUARE.observables["B"])  # z on the second qubit
        assert not plan_b.requires_entangling_map
        assert plan_b.measured_qubit == 1 and plan_b.idle_qubit == 0
        plan_c = plan_for(SQUARE.observables["C"])  # two-body correlation
        assert plan_c.requires_entangling_map
        assert plan_c.measured_qubit == 0

    def test_block_observables_are_entangling(self):
        chsh = load_set("chsh_product")
        assert plan_for(chsh.observables["B"]).requires_entangling_map
        assert plan_for(chsh.observables["D"]).requires_entangling_map

    def test_dimension_guard(self):
        qutrit_obs = load_set("kcbs_pentagram").observables["A"]
        with pytest.raises(UnsupportedDimension):
            plan_for(qutrit_obs)


class TestChannelSanity:
    def test_exact_record_distribution_is_normalized(self, rng):
        noise = NoiseConfig()
        for _ in range(20):
            state = random_pure_state(4, rng)
            dist = noisy_record_distribution(state, ("C", "c", "gamma"), SQUARE.observables, noise)
            assert sum(dist.probs.values()) == pytest.approx(1.0, abs=1e-10)

    def test_zero_noise_limit_equals_exact_engine(self, rng):
        zero = NoiseConfig.zero()
        for seq in (("A",), ("C", "c", "gamma"), ("A", "B", "C")):
            for state in (FIG2, MAX_MIXED, random_pure_state(4, rng)):
                noisy = noisy_record_distribution(state, seq, SQUARE.observables, zero)
                ideal = branch_table(state, seq, SQUARE.observables).outcome_probabilities()
                for outcomes in set(noisy.probs) | set(ideal):
                    assert noisy.probs.get(outcomes, 0.0) == pytest.approx(
                        ideal.get(outcomes, 0.0), abs=1e-10
                    )

    def test_sampled_records_match_exact_distribution(self):
        noise = NoiseConfig()
        seq = ("C", "c", "gamma")
        n = 40_000
        records = noisy_batch(FIG2, seq, SQUARE.observables, noise, n, np.random.default_rng(8))
        exact = noisy_record_distribution(FIG2, seq, SQUARE.observables, noise)
        for outcomes, p in exact.probs.items():
            observed = float(np.mean(np.all(records == np.array(outcomes), axis=1)))
            sigma = math.sqrt(max(p * (1 - p), 1e-9) / n)
            assert abs(observed - p) < 5 * sigma

    def test_single_sample_is_deterministic_given_seed(self):
        noise = NoiseConfig()
        rec_a = noisy_sequence_sample(FIG2, ("C", "c"), SQUARE.observables, noise, np.random.default_rng(5))
        rec_b = noisy_sequence_sample(FIG2, ("C", "c"), SQUARE.observables, noise, np.random.default_rng(5))
        assert rec_a == rec_b


class TestTables:
    def test_exact_first_table_in_paper_band(self):
        table = repeated_measurement_table("z1", NoiseConfig(), n_trials=None)
        for key, paper_value in PAPER_TABLE_Z1.items():
            assert abs(table.values[key] - paper_value) <= 0.02

    def test_exact_first_table_values_in_example_band(self):
        table = repeated_measurement_table("z1", NoiseConfig(), n_trials=None)
        for value in table.values.values():
            assert 0.94 <= value <= 0.99

    def test_second_table_nearest_beats_far(self):
        table = repeated_measurement_table("xx", NoiseConfig(), n_trials=None)
        assert table.values[(1, 2)] > table.values[(1, 5)] + 0.05

    def test_zero_noise_tables_are_unity(self):
        tables = replicate_tables(NoiseConfig.zero(), n_trials=None)
        for table in tables.values():
            assert all(v == pytest.approx(1.0, abs=1e-10) for v in table.values.values())

    def test_sampled_table_agrees_with_exact(self):
        noise = NoiseConfig()
        exact = repeated_measurement_table("z1", noise, n_trials=None)
        sampled = repeated_measurement_table("z1", noise, n_trials=1100, seed=3)
        for key, value in exact.values.items():
            sigma = max(sampled.standard_errors[key], 1e-6)
            assert abs(sampled.values[key] - value) < 5 * sigma

    def test_csv_layout(self):
        table = repeated_measurement_table("z1", NoiseConfig(), n_trials=None)
        lines = table.to_csv().strip().splitlines()
        assert lines[0] == "measurement,2,3,4,5"
        assert len(lines) == 5
        assert lines[4].startswith("4,,,")


class TestHeadlines:
    def test_exact_square_headline_in_band(self):
        headlines = replicate_headlines(NoiseConfig(), n_trials=None)
        assert 5.2 <= headlines["chi_ks"] <= 5.6

    def test_exact_corrected_chsh_near_reported_value(self):
        headlines = replicate_headlines(NoiseConfig(), n_trials=None)
        assert headlines["chsh_corrected"] == pytest.approx(2.23, abs=0.05)

    def test_zero_noise_headline_is_six(self):
        headlines = replicate_headlines(NoiseConfig.zero(), n_trials=None)
        assert headlines["chi_ks"] == pytest.approx(6.0, abs=1e-9)

    def test_sampled_corrected_chsh_is_significant(self):
        headlines = replicate_headlines(NoiseConfig(), n_trials=6600, seed=3)
        assert headlines["chsh_corrected"] - 2.0 > 3.0 * headlines["chsh_corrected_se"]


class TestMonotoneDegradation:
    def test_square_headline_never_improves_with_more_noise(self):
        # exact record distributions make the monotonicity deterministic
        base = NoiseConfig()
        for field in (
            "detection_flip",
            "pumping_failure",
            "dephasing_idle",
            "gate_depolarizing",
            "spontaneous_decay",
        ):
            previous = math.inf
            for value in np.linspace(0.0, 0.12, 5):
                config = dataclasses.replace(base, **{field: float(value)})
                chi = replicate_headlines(config, n_trials=None)["chi_ks"]
                assert chi <= previous + 1e-9
                previous = chi


class TestNoiseConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            NoiseConfig(detection_flip=0.7)
        with pytest.raises(ValueError):
            NoiseConfig(gate_depolarizing=-0.01)

    def test_json_roundtrip(self):
        config = NoiseConfig(detection_flip=0.004)
        payload = config.to_json_dict()
        assert payload["dephasing_idle_calibrated"] is True
        rebuilt = NoiseConfig.from_json_dict(
            {k: v for k, v in payload.items() if k != "dephasing_idle_calibrated"}
        )
        assert rebuilt == config

    def test_unknown_field_rejected(self):
        with pytest.raises(ValueError):
            NoiseConfig.from_json_dict({"nope": 0.1})


class TestNoisySystem:
    def test_exact_mode_reports_exact_source(self):
        system = NoisySystem(FIG2, SQUARE, NoiseConfig(), n_trials=None)
        assert system.source == "exact"
        dist = system.outcome_distribution(("A", "B"))
        assert dist.exact

    def test_dimension_guard(self):
        kcbs = load_set("kcbs_pentagram")
        system = NoisySystem(load_state("kcbs_optimal").state, kcbs, NoiseConfig(), n_trials=None)
        with pytest.raises(UnsupportedDimension):
            system.outcome_distribution(("A",))
