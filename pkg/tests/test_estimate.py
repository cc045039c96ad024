import math

import numpy as np
import pytest

from macronas.archfmt import LayerKind, LayerRecord
from macronas.data import SynthSpec, partial_split, synth_dataset
from macronas.estimate import (
    CorrelationMatrix,
    MixedEvaluator,
    PopulationStats,
    correlation_matrix,
    ensemble_predict,
    jacobian_score,
    kendall_tau,
    low_fidelity_fitness,
    mixed_fitness,
    score_network,
)
from macronas.evolve import CandidateArchitecture
from macronas.netrt import compile_plan, init_params

K = LayerKind


def rec(kind, **params):
    return LayerRecord(kind, params)


def brute_force_tau_b(a, b):
    """Independent oracle: count pairs directly with tie corrections."""
    n = len(a)
    concordant = discordant = ties_a = ties_b = 0
    for i in range(n):
        for j in range(i + 1, n):
            da, db = a[i] - a[j], b[i] - b[j]
            if da == 0 and db == 0:
                continue
            if da == 0:
                ties_a += 1
            elif db == 0:
                ties_b += 1
            elif (da > 0) == (db > 0):
                concordant += 1
            else:
                discordant += 1
    denom = math.sqrt(
        (concordant + discordant + ties_a) * (concordant + discordant + ties_b)
    )
    return (concordant - discordant) / denom


class TestCorrelationMatrix:
    def test_orthogonal_zero_mean_rows_give_identity(self):
        jac = np.array(
            [
                [1.0, -1.0, 1.0, -1.0],
                [1.0, 1.0, -1.0, -1.0],
                [1.0, -1.0, -1.0, 1.0],
            ]
        )
        assert np.allclose(correlation_matrix(jac).matrix, np.eye(3), atol=1e-12)

    def test_identical_rows_give_all_ones(self):
        jac = np.tile(np.array([0.3, -1.2, 2.0, 0.1]), (4, 1))
        assert np.allclose(correlation_matrix(jac).matrix, np.ones((4, 4)), atol=1e-12)

    def test_symmetric_unit_diagonal_and_psd(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            corr = correlation_matrix(rng.normal(size=(6, 30))).matrix
            assert np.abs(corr - corr.T).max() <= 1e-9
            assert np.allclose(np.diag(corr), 1.0)
            assert np.linalg.eigvalsh(corr).min() >= -1e-6

    def test_trace_preserved(self):
        rng = np.random.default_rng(1)
        corr = correlation_matrix(rng.normal(size=(8, 40)))
        assert np.linalg.eigvalsh(corr.matrix).sum() == pytest.approx(8.0, abs=1e-6)

    def test_constant_rows_are_isolated(self):
        jac = np.vstack([np.full(10, 2.0), np.arange(10.0), np.full(10, -1.0)])
        corr = correlation_matrix(jac).matrix
        assert corr[0, 1] == 0.0 and corr[0, 2] == 0.0 and corr[2, 1] == 0.0
        assert np.allclose(np.diag(corr), 1.0)

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError, match="2 rows"):
            correlation_matrix(np.ones((1, 5)))
        with pytest.raises(ValueError, match="non-finite"):
            correlation_matrix(np.array([[1.0, np.nan], [0.0, 1.0]]))
        with pytest.raises(ValueError, match="symmetric"):
            CorrelationMatrix(np.array([[1.0, 0.5], [0.2, 1.0]]))


class TestJacobianScore:
    def test_identity_reference_value(self):
        s = jacobian_score(CorrelationMatrix(np.eye(8)))
        assert s == pytest.approx(1250.0, rel=1e-6)

    def test_fully_correlated_reference_value(self):
        s = jacobian_score(CorrelationMatrix(np.ones((8, 8))))
        assert s == pytest.approx(0.014287, rel=1e-3)

    def test_monotone_decrease_with_correlation(self):
        scores = []
        for rho in (0.0, 0.25, 0.5, 0.75, 1.0):
            m = (1 - rho) * np.eye(8) + rho * np.ones((8, 8))
            np.fill_diagonal(m, 1.0)
            scores.append(jacobian_score(CorrelationMatrix(m)))
        assert all(a > b for a, b in zip(scores, scores[1:]))

    def test_batch_permutation_invariance(self):
        rng = np.random.default_rng(3)
        jac = rng.normal(size=(6, 20))
        perm = rng.permutation(6)
        a = jacobian_score(correlation_matrix(jac))
        b = jacobian_score(correlation_matrix(jac[perm]))
        assert a == pytest.approx(b, rel=1e-12)

    def test_score_network_end_to_end(self):
        plan = compile_plan(
            [rec(K.CONV, kernel_size=3, out_channels=4), rec(K.RELU)], (2, 6, 6), 5
        )
        params = init_params(plan, np.random.default_rng(0))
        x = np.random.default_rng(1).normal(size=(8, 2, 6, 6))
        s = score_network(plan, params, x)
        assert math.isfinite(s) and s > 0.0


class TestLowFidelityFitness:
    def test_zero_epochs_rejected(self):
        ds = synth_dataset(SynthSpec(num_classes=2, n=100, channels=1, height=2, width=2), seed=0)
        split = partial_split(ds, 0.5, 0.2, seed=0)
        cand = CandidateArchitecture(layers=[rec(K.RELU)], genealogy=["x"])
        with pytest.raises(ValueError, match="epochs"):
            low_fidelity_fitness(cand, split.partial_train, split.partial_valid, 0, np.random.default_rng(0))

    def test_signal_free_data_trains_to_chance(self):
        ds = synth_dataset(
            SynthSpec(num_classes=10, n=1500, channels=1, height=4, width=4, noise=1000.0), seed=1
        )
        split = partial_split(ds, 0.4, 0.4, seed=1)
        cand = CandidateArchitecture(layers=[rec(K.FLATTEN)], genealogy=["x"])
        acc = low_fidelity_fitness(cand, split.partial_train, split.partial_valid, 1, np.random.default_rng(2))
        assert acc == pytest.approx(0.1, abs=0.05)

    def test_learnable_data_beats_chance(self):
        ds = synth_dataset(SynthSpec(num_classes=4, n=400, channels=1, height=4, width=4, noise=0.3), seed=2)
        split = partial_split(ds, 0.5, 0.25, seed=2)
        cand = CandidateArchitecture(layers=[rec(K.LINEAR, out_features=16), rec(K.RELU)], genealogy=["x", "x"])
        acc = low_fidelity_fitness(cand, split.partial_train, split.partial_valid, 4, np.random.default_rng(3))
        assert acc > 0.5


class TestMixedFitness:
    UNIT = PopulationStats(accuracy_min=0.0, accuracy_max=1.0, score_min=0.0, score_max=1.0)

    def test_lambda_zero_is_accuracy_only(self):
        out = mixed_fitness(0.37, 123.0, 0.0, PopulationStats(0.0, 1.0, 0.0, 2000.0))
        assert out.fitness == out.accuracy_norm == 0.37

    def test_lambda_one_is_score_only(self):
        out = mixed_fitness(0.9, 500.0, 1.0, PopulationStats(0.0, 1.0, 0.0, 2000.0))
        assert out.fitness == out.score_norm == 0.25

    def test_blend_arithmetic(self):
        out = mixed_fitness(0.6, 0.2, 0.75, self.UNIT)
        assert out.fitness == pytest.approx(0.30, abs=1e-12)

    def test_affine_in_lambda(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            acc, score = rng.random(), rng.random() * 2000
            stats = PopulationStats(0.0, 1.0, 0.0, 2000.0)
            f0 = mixed_fitness(acc, score, 0.0, stats)
            f1 = mixed_fitness(acc, score, 1.0, stats)
            for lam in (0.2, 0.5, 0.8):
                f = mixed_fitness(acc, score, lam, stats).fitness
                assert f == pytest.approx(
                    f0.fitness + lam * (f1.fitness - f0.fitness), abs=1e-12
                )

    def test_degenerate_range_pins_to_half(self):
        stats = PopulationStats(0.4, 0.4, 7.0, 7.0)
        out = mixed_fitness(0.4, 7.0, 0.3, stats)
        assert out.accuracy_norm == 0.5 and out.score_norm == 0.5 and out.fitness == 0.5

    def test_lambda_out_of_range(self):
        with pytest.raises(ValueError):
            mixed_fitness(0.5, 1.0, 1.5, self.UNIT)


class TestKendallTau:
    def test_perfect_agreement(self):
        assert kendall_tau([1, 2, 3], [1, 2, 3]) == 1.0

    def test_perfect_reversal(self):
        assert kendall_tau([1, 2, 3], [3, 2, 1]) == -1.0

    def test_one_swapped_pair(self):
        assert kendall_tau([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(4 / 6)

    def test_monotone_fixture(self):
        fitness = [0.1, 0.4, 0.43, 0.7, 0.9]
        oracle = [0.31, 0.52, 0.55, 0.61, 0.88]
        assert kendall_tau(fitness, oracle) == pytest.approx(1.0, abs=1e-12)

    def test_errors(self):
        with pytest.raises(ValueError, match="length"):
            kendall_tau([1, 2], [1, 2, 3])
        with pytest.raises(ValueError, match="tied"):
            kendall_tau([2, 2, 2], [1, 2, 3])

    def test_matches_brute_force_with_ties(self):
        rng = np.random.default_rng(5)
        for _ in range(300):
            n = int(rng.integers(2, 7))
            a = rng.integers(0, 4, n).tolist()
            b = rng.integers(0, 4, n).tolist()
            if len(set(a)) < 2 or len(set(b)) < 2:
                continue
            assert kendall_tau(a, b) == pytest.approx(brute_force_tau_b(a, b), abs=1e-12)


class TestEnsemble:
    def test_single_model_is_its_argmax(self):
        logits = np.array([[0.2, 0.9, 0.1], [0.8, 0.1, 0.1]])
        assert np.array_equal(ensemble_predict([logits], [0.7]), logits.argmax(axis=1))

    def test_weighted_majority_hand_tally(self):
        # m1 votes class 2 (w 0.9); m2 and m3 vote class 0 (w 0.5 each)
        m1 = np.array([[0.0, 0.0, 5.0]])
        m2 = np.array([[5.0, 0.0, 0.0]])
        m3 = np.array([[5.0, 0.0, 0.0]])
        out = ensemble_predict([m1, m2, m3], [0.9, 0.5, 0.5])
        assert out.tolist() == [0]

    def test_unanimous_vote_ignores_weights(self):
        logit = np.array([[0.0, 9.0]])
        out = ensemble_predict([logit] * 3, [0.01, 0.5, 0.99])
        assert out.tolist() == [1]

    def test_equal_weights_odd_k_is_simple_majority(self):
        rng = np.random.default_rng(6)
        models = [rng.normal(size=(40, 2)) for _ in range(5)]
        weighted = ensemble_predict(models, [1.0] * 5)
        votes = np.stack([m.argmax(axis=1) for m in models])
        majority = (votes.sum(axis=0) > 2.5).astype(int)
        assert np.array_equal(weighted, majority)

    def test_tie_breaks_to_lowest_class(self):
        m1 = np.array([[9.0, 0.0]])
        m2 = np.array([[0.0, 9.0]])
        out = ensemble_predict([m1, m2], [0.5, 0.5])
        assert out.tolist() == [0]

    def test_validation(self):
        logits = np.zeros((2, 3))
        with pytest.raises(ValueError, match="one weight"):
            ensemble_predict([logits], [0.5, 0.5])
        with pytest.raises(ValueError, match="at least one"):
            ensemble_predict([logits], [0.0])
        with pytest.raises(ValueError, match="shape"):
            ensemble_predict([logits, np.zeros((2, 4))], [1.0, 1.0])
        with pytest.raises(ValueError, match="at least one model"):
            ensemble_predict([], [])


class TestMixedEvaluator:
    @pytest.fixture
    def splits(self):
        ds = synth_dataset(SynthSpec(num_classes=4, n=300, channels=1, height=4, width=4, noise=0.8), seed=7)
        split = partial_split(ds, 0.2, 0.1, seed=7)
        return split.partial_train, split.partial_valid

    def _cands(self):
        return [
            CandidateArchitecture(layers=[rec(K.CONV, kernel_size=3, out_channels=4), rec(K.RELU)], genealogy=["a"] * 2),
            CandidateArchitecture(layers=[rec(K.LINEAR, out_features=8)], genealogy=["a"]),
        ]

    def test_score_only_mode_runs_no_training(self, splits):
        ev = MixedEvaluator(*splits, lam=1.0, epochs=3, seed=0)
        rngs = [np.random.default_rng(i) for i in range(2)]
        fits = ev.evaluate_generation(self._cands(), rngs)
        assert ev.train_steps == 0
        assert all(math.isfinite(f) for f in fits)

    def test_accuracy_only_mode_skips_scoring(self, splits):
        ev = MixedEvaluator(*splits, lam=0.0, epochs=1, seed=0)
        cands = self._cands()
        ev.evaluate_generation(cands, [np.random.default_rng(i) for i in range(2)])
        assert ev.train_steps > 0
        assert all(c.components.score == 0.0 for c in cands)

    def test_failed_candidate_gets_minus_inf(self, splits):
        bad = CandidateArchitecture(
            layers=[rec(K.FLATTEN), rec(K.CONV, kernel_size=3, out_channels=4)], genealogy=["a"] * 2
        )
        ev = MixedEvaluator(*splits, lam=0.5, epochs=1, seed=0)
        fits = ev.evaluate_generation([bad] + self._cands(), [np.random.default_rng(i) for i in range(3)])
        assert fits[0] == -math.inf
        assert ev.failures and ev.failures[0][0] == -1

    def test_components_recorded(self, splits):
        ev = MixedEvaluator(*splits, lam=0.5, epochs=1, seed=0)
        cands = self._cands()
        ev.evaluate_generation(cands, [np.random.default_rng(i) for i in range(2)])
        for c in cands:
            assert 0.0 <= c.components.accuracy <= 1.0
            assert c.components.score > 0.0
