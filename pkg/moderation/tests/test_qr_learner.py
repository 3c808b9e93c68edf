import math
import pickle

import numpy as np
from django.test import SimpleTestCase

from moderation.services.behavior import IdealizedOracle, ReplayOracle
from moderation.services.exceptions import (
    RatioBracketError,
    ScaleReconciliationError,
    UnrecoverablePairError,
)
from moderation.services.experiments import RandomGameGenerator
from moderation.services.game_core import Game, ProfileIndexing
from moderation.services.qr_learner import (
    RecoveredDifferences,
    RecoveredPair,
    SignPattern,
    alignment_error,
    assemble_utilities,
    bisection_steps,
    binary_search_ratio,
    learn_agent,
    learn_game,
    learn_sign_patterns,
    matrix_alignment_error,
    membership_query_count,
    query_budget,
    ratio_query_mechanism,
    reconcile_scales,
    recover_pair,
    sign_query_mechanism,
    unlearnable_pairs,
)

from .fixtures import constant_game, counterexample_u, dominant_game


def _recovered(values_by_pair, agent=0):
    pairs = {
        pair: RecoveredPair(pair, np.array(values, dtype=float), 0, 1, {}, 0)
        for pair, values in values_by_pair.items()
    }
    return RecoveredDifferences(agent=agent, eps=1e-6, pairs=pairs)


class _BracketRecorder:
    """Guarda (τ, pertinência) de cada consulta de razão."""

    def __init__(self, inner, indexing, p, j):
        self.inner = inner
        self.indexing = indexing
        self.p, self.j = p, j
        self.calls = []

    def response_set(self, mechanism, agent, rec):
        return self.inner.response_set(mechanism, agent, rec)

    def is_member(self, mechanism, agent, rec, dev):
        row = self.indexing.by_agent(mechanism.probs, agent)[rec]
        member = self.inner.is_member(mechanism, agent, rec, dev)
        self.calls.append((row[self.j] / row[self.p], member))
        return member


class AccountingTests(SimpleTestCase):
    def test_bisection_steps(self):
        self.assertEqual(bisection_steps(1e-3, 100), 17)
        self.assertEqual(bisection_steps(1.0, 8.0), 3)
        with self.assertRaises(ValueError):
            bisection_steps(0.0, 100)
        with self.assertRaises(ValueError):
            bisection_steps(1.0, 1.0)

    def test_halving_eps_adds_one_step_per_bisection(self):
        for actions in (2, 3, 4):
            indexing = ProfileIndexing((actions, actions))
            eps = 1e-3
            for _ in range(5):
                for agent in range(2):
                    pairs = actions * (actions - 1) // 2
                    width = indexing.opponent_count(agent)
                    self.assertEqual(
                        query_budget(indexing, agent, eps / 2, 100) - query_budget(indexing, agent, eps, 100),
                        pairs * (width - 1),
                    )
                eps /= 2

    def test_query_budget_formula(self):
        indexing = ProfileIndexing((3, 2))
        # agente 0: d = 2, 3 pares, 1 busca cada; agente 1: d = 3, 1 par, 2 buscas
        self.assertEqual(query_budget(indexing, 0, 1e-3, 100), 2 + 3 * 1 * 17)
        self.assertEqual(query_budget(indexing, 1, 1e-3, 100), 3 + 1 * 2 * 17)
        self.assertEqual(membership_query_count(indexing, 1e-3, 100), 2 * 6 + 3 * 17 + 3 * 2 + 2 * 17)

    def test_learning_uses_exact_budget(self):
        for actions in (2, 3, 4):
            generator = RandomGameGenerator((actions, 2), seed=actions)
            game = generator.generate()
            learned = learn_game(IdealizedOracle(game), game.indexing, eps=1e-4, c_ratio=100)
            budget = sum(query_budget(game.indexing, agent, 1e-4, 100) for agent in range(2))
            self.assertEqual(learned.queries, budget)
            self.assertEqual(
                len(learned.transcript),
                sum(game.opponent_count(i) * game.radices[i] for i in range(2))
                + membership_query_count(game.indexing, 1e-4, 100)
                - sum(game.opponent_count(i) * game.radices[i] * (game.radices[i] - 1) for i in range(2)),
            )


class QueryMechanismTests(SimpleTestCase):
    def test_sign_query(self):
        indexing = ProfileIndexing((3, 2))
        mechanism = sign_query_mechanism(indexing, 0, 1)
        self.assertAlmostEqual(mechanism.probs.sum(), 1.0)
        for action in range(3):
            np.testing.assert_allclose(indexing.by_agent(mechanism.probs, 0)[action], [0, 1 / 3])
        with self.assertRaises(IndexError):
            sign_query_mechanism(indexing, 0, 2)

    def test_ratio_query(self):
        indexing = ProfileIndexing((2, 3))
        mechanism = ratio_query_mechanism(indexing, 0, 1, 0, 2, 3.0)
        np.testing.assert_allclose(indexing.by_agent(mechanism.probs, 0), [[0, 0, 0], [0.25, 0, 0.75]])
        with self.assertRaises(ValueError):
            ratio_query_mechanism(indexing, 0, 1, 0, 0, 3.0)
        with self.assertRaises(ValueError):
            ratio_query_mechanism(indexing, 0, 1, 0, 2, -1.0)


class SignAndRatioTests(SimpleTestCase):
    def test_sign_patterns(self):
        game = counterexample_u()
        patterns = learn_sign_patterns(IdealizedOracle(game), game.indexing, 1)
        self.assertEqual(patterns[(0, 1)].positive, frozenset({0, 2}))
        self.assertEqual(patterns[(0, 1)].negative, frozenset({1, 3}))
        self.assertEqual(patterns[(1, 0)].positive, frozenset({1, 3}))
        self.assertTrue(patterns[(0, 1)].recoverable)

    def test_binary_search_ratio(self):
        game = counterexample_u()
        oracle = IdealizedOracle(game)
        # w(b1, b2) = (2, −2, 3, −4): τ* = −w_0 / w_3 = 0.5
        tau, steps = binary_search_ratio(oracle, game.indexing, 1, (0, 1), 0, 3, 1e-6, 100)
        self.assertLessEqual(abs(tau - 0.5), 1e-6)
        self.assertEqual(steps, bisection_steps(1e-6, 100))

    def test_small_ratio_keeps_relative_accuracy(self):
        # w(a1, a2) = (0.2, −9): τ* = 1/45, ŵ_1 = −45
        game = Game([["a1", "a2"], ["b1", "b2"]], [[0, 0, 0.2, -9], [0, 1, 0, -1]])
        tau, _ = binary_search_ratio(IdealizedOracle(game), game.indexing, 0, (0, 1), 0, 1, 1e-3, 100)
        self.assertLessEqual(abs(tau - 1 / 45), 1e-3)
        self.assertLessEqual(abs(-1.0 / tau + 45.0) / 45.0, 1e-3)

    def test_ratio_below_bound(self):
        game = Game([["a1", "a2"], ["b1", "b2"]], [[0, 0, 0.1, -50], [0, 1, 0, -1]])
        with self.assertRaises(RatioBracketError) as context:
            binary_search_ratio(IdealizedOracle(game), game.indexing, 0, (0, 1), 0, 1, 1e-3, 100)
        self.assertEqual(context.exception.indices, (0, 1))

    def test_bracket_is_monotone(self):
        game = counterexample_u()
        oracle = _BracketRecorder(IdealizedOracle(game), game.indexing, p=0, j=3)
        tau, steps = binary_search_ratio(oracle, game.indexing, 1, (0, 1), 0, 3, 1e-3, 100)
        self.assertEqual(len(oracle.calls), steps)
        accepted = [t for t, member in oracle.calls if member]
        rejected = [t for t, member in oracle.calls if not member]
        self.assertTrue(accepted and rejected)
        self.assertLess(max(accepted), min(rejected))
        self.assertLessEqual(max(accepted), 0.5 + 1e-8)
        self.assertGreaterEqual(min(rejected), 0.5 - 1e-8)
        self.assertLessEqual(max(accepted), tau)
        self.assertLessEqual(tau, min(rejected))

    def test_ratio_above_bound(self):
        game = Game([["a1", "a2"], ["b1", "b2"]], [[0, 0, 50, -0.1], [0, 1, 0, -1]])
        with self.assertRaises(RatioBracketError) as context:
            learn_agent(IdealizedOracle(game), game.indexing, 0, eps=1e-3, c_ratio=100)
        self.assertEqual(context.exception.agent, 0)
        self.assertEqual(context.exception.indices, (0, 1))

        restored = pickle.loads(pickle.dumps(context.exception))
        self.assertEqual(restored.pair, (0, 1))
        self.assertEqual(str(restored), str(context.exception))

    def test_unrecoverable_pair(self):
        pattern = SignPattern(0, 0, 1, frozenset({0, 1}), frozenset())
        self.assertFalse(pattern.recoverable)
        with self.assertRaises(UnrecoverablePairError):
            recover_pair(IdealizedOracle(dominant_game()), ProfileIndexing((2, 2)), pattern, 1e-3, 100)

    def test_recover_pair_normalized_by_pivot(self):
        game = counterexample_u()
        oracle = IdealizedOracle(game)
        patterns = learn_sign_patterns(oracle, game.indexing, 1)
        recovered = recover_pair(oracle, game.indexing, patterns[(0, 1)], 1e-7, 100)
        np.testing.assert_allclose(recovered.values, [1.0, -1.0, 1.5, -2.0], atol=1e-5)
        self.assertEqual((recovered.positive_pivot, recovered.negative_pivot), (0, 1))
        self.assertEqual(recovered.queries, 3 * bisection_steps(1e-7, 100))

    def test_unlearnable_pairs(self):
        self.assertEqual(unlearnable_pairs(counterexample_u()), [])
        self.assertIn((0, 0, 1), unlearnable_pairs(dominant_game()))
        self.assertEqual(len(unlearnable_pairs(constant_game())), 2)


class ReconciliationTests(SimpleTestCase):
    # linhas r0 = 0, r1 = (3, −1, 2), r2 = (1, 2, −3) com escalas arbitrárias
    PAIRS = {
        (0, 1): [3, -1, 2],
        (0, 2): [0.5, 1, -1.5],
        (1, 2): [-4, 6, -10],
    }

    def test_exact_scales(self):
        reconciliation = reconcile_scales(_recovered(self.PAIRS))
        self.assertAlmostEqual(reconciliation.multipliers[(0, 1)], 1.0)
        self.assertAlmostEqual(reconciliation.multipliers[(0, 2)], 2.0, places=9)
        self.assertAlmostEqual(reconciliation.multipliers[(1, 2)], 0.5, places=9)
        self.assertLess(reconciliation.residual, 1e-9)

    def test_kaczmarz_matches_normal_equations(self):
        normal = reconcile_scales(_recovered(self.PAIRS))
        kaczmarz = reconcile_scales(_recovered(self.PAIRS), mode="kaczmarz")
        for pair, value in normal.multipliers.items():
            self.assertAlmostEqual(kaczmarz.multipliers[pair], value, places=6)

    def test_inconsistent_estimates(self):
        corrupted = dict(self.PAIRS)
        corrupted[(1, 2)] = [4, 6, -10]
        with self.assertRaises(ScaleReconciliationError) as context:
            reconcile_scales(_recovered(corrupted, agent=1))
        self.assertEqual(context.exception.agent, 1)
        self.assertEqual(context.exception.triple, (0, 1, 2))
        self.assertGreater(context.exception.residual, 0.05)

    def test_assemble_utilities(self):
        recovered = _recovered(self.PAIRS)
        matrix = assemble_utilities(recovered, reconcile_scales(recovered), 3)
        np.testing.assert_allclose(matrix, [[0, 0, 0], [3, -1, 2], [1, 2, -3]], atol=1e-9)

    def test_single_pair(self):
        reconciliation = reconcile_scales(_recovered({(0, 1): [1, -1]}))
        self.assertEqual(reconciliation.multipliers, {(0, 1): 1.0})

    def test_unknown_mode(self):
        with self.assertRaises(ValueError):
            reconcile_scales(_recovered(self.PAIRS), mode="gauss")


class LearnGameTests(SimpleTestCase):
    def test_counterexample_recovery(self):
        game = counterexample_u()
        learned = learn_game(IdealizedOracle(game), game.indexing, eps=1e-4, c_ratio=100)
        for agent in range(2):
            self.assertLessEqual(alignment_error(learned.game, game, agent), 5e-3)

    def test_random_generic_games(self):
        """50 jogos genéricos de 2 agentes com m_i ∈ {2, 3}."""
        eps, c_ratio = 1e-3, 100
        for seed in range(50):
            radices = ((2, 2), (2, 3), (3, 2), (3, 3))[seed % 4]
            game = RandomGameGenerator(radices, seed=seed).generate()
            learned = learn_game(IdealizedOracle(game), game.indexing, eps=eps, c_ratio=c_ratio)
            for agent in range(2):
                self.assertLessEqual(alignment_error(learned.game, game, agent), 5e-3)
            bound = 4 * 2 * max(radices) * game.profile_count * math.log2(c_ratio / eps)
            self.assertLessEqual(learned.queries, bound)

    def test_recovered_differences_preserve_signs(self):
        """⟨ŵ, y⟩ e ⟨w, y⟩ concordam fora de uma faixa de 10·eps em torno dos hiperplanos."""
        eps = 1e-4
        game = RandomGameGenerator((3, 3), seed=11).generate()
        learned = learn_game(IdealizedOracle(game), game.indexing, eps=eps, c_ratio=100)
        rng = np.random.default_rng(0)
        for estimate in learned.agents:
            matrix = game.utility_matrix(estimate.agent)
            for (a, b), recovered in estimate.recovered.pairs.items():
                truth = matrix[b] - matrix[a]
                truth = truth / truth[recovered.positive_pivot]
                beliefs = rng.uniform(0, 1, size=(10_000, truth.size))
                scale = np.abs(truth).sum() * beliefs.max(axis=1)
                exact = beliefs @ truth
                learned_side = beliefs @ recovered.values
                clear = (np.abs(exact) > 10 * eps * scale) & (np.abs(learned_side) > 10 * eps * scale)
                self.assertGreater(clear.sum(), 5_000)
                np.testing.assert_array_equal(np.sign(exact[clear]), np.sign(learned_side[clear]))
                np.testing.assert_allclose(recovered.values, truth, rtol=10 * eps)

    def test_transcript_replays(self):
        game = RandomGameGenerator((3, 2), seed=4).generate()
        learned = learn_game(IdealizedOracle(game), game.indexing, eps=1e-4, c_ratio=100)
        replay = ReplayOracle(learned.transcript)
        again = learn_game(replay, game.indexing, eps=1e-4, c_ratio=100)
        self.assertTrue(replay.exhausted)
        np.testing.assert_array_equal(again.game.utilities, learned.game.utilities)

    def test_alignment_error_is_affine_invariant(self):
        rng = np.random.default_rng(0)
        truth = rng.uniform(1, 10, size=(3, 4))
        self.assertLess(matrix_alignment_error(truth * 0.3 + rng.normal(size=4), truth), 1e-12)
        self.assertGreater(matrix_alignment_error(truth[::-1], truth), 0.1)
