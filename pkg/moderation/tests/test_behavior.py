import numpy as np
from django.test import SimpleTestCase

from moderation.services.behavior import (
    AgentPopulation,
    BehaviorModel,
    FeedbackRecord,
    IdealizedOracle,
    RecordingOracle,
    ReplayOracle,
    SampledOracle,
    best_response_set,
    membership_sample_budget,
    quantal_response_set,
    response_distribution,
)
from moderation.services.game_core import Mechanism, ProfileIndexing, incentive

from .fixtures import constant_game, dominant_game, random_game, random_mechanism


class ResponseSetTests(SimpleTestCase):
    def setUp(self):
        self.game = dominant_game()
        self.cooperate = Mechanism.point_mass(self.game.indexing, 0)

    def test_best_response(self):
        self.assertEqual(best_response_set(self.game, self.cooperate, 0, 0), frozenset({1}))
        self.assertEqual(best_response_set(self.game, self.cooperate, 1, 0), frozenset({1}))

    def test_quantal_response_keeps_recommendation(self):
        self.assertEqual(quantal_response_set(self.game, self.cooperate, 0, 0), frozenset({0, 1}))
        # recomendando defect, cooperar tem incentivo negativo
        defect = Mechanism.point_mass(self.game.indexing, 3)
        self.assertEqual(quantal_response_set(self.game, defect, 0, 1), frozenset({1}))

    def test_zero_marginal_returns_all_actions(self):
        self.assertEqual(best_response_set(self.game, self.cooperate, 0, 1), frozenset({0, 1}))
        self.assertEqual(quantal_response_set(self.game, self.cooperate, 0, 1), frozenset({0, 1}))

    def test_ties_within_tolerance(self):
        indexing = self.game.indexing
        mechanism = Mechanism([0.25, 0.25, 0.25, 0.25], indexing)
        game = random_game((2, 2), np.random.default_rng(0))
        matrix = game.utility_matrix(0).copy()
        matrix[1] = matrix[0]
        tied = game.with_utility_matrix(0, matrix)
        self.assertEqual(best_response_set(tied, mechanism, 0, 0), frozenset({0, 1}))

    def test_quantal_support_does_not_depend_on_beta(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            game = random_game((3, 3), rng)
            mechanism = random_mechanism(game.indexing, rng)
            for rec in range(3):
                members = quantal_response_set(game, mechanism, 0, rec)
                for beta in (0.0, 1.0, 5.0):
                    probs = response_distribution(game, mechanism, 0, rec, BehaviorModel.QUANTAL_RESPONSE, beta)
                    self.assertAlmostEqual(probs.sum(), 1.0, places=12)
                    self.assertEqual(frozenset(np.flatnonzero(probs > 0).tolist()), members)

    def test_quantal_distribution_is_logit(self):
        game = dominant_game()
        probs = response_distribution(game, self.cooperate, 0, 0, BehaviorModel.QUANTAL_RESPONSE, beta=1.0)
        # φ = (0, 2) no conjunto {cooperate, defect}
        expected = np.exp([0.0, 2.0]) / np.exp([0.0, 2.0]).sum()
        np.testing.assert_allclose(probs, expected)

    def test_best_response_distribution_is_uniform(self):
        tied = dominant_game()
        mechanism = Mechanism.point_mass(tied.indexing, 0)
        probs = response_distribution(tied, mechanism, 0, 1, BehaviorModel.BEST_RESPONSE)
        np.testing.assert_allclose(probs, [0.5, 0.5])


class AgentPopulationTests(SimpleTestCase):
    def test_validation(self):
        with self.assertRaises(ValueError):
            AgentPopulation(dominant_game(), beta=-1.0)
        with self.assertRaises(ValueError):
            AgentPopulation(dominant_game(), beta=float("inf"))
        with self.assertRaises(ValueError):
            AgentPopulation(dominant_game(), seed=-1)

    def test_sample_response_is_reproducible(self):
        rng = np.random.default_rng(5)
        game = random_game((3, 2), rng)
        mechanism = random_mechanism(game.indexing, rng)
        first = AgentPopulation(game, BehaviorModel.QUANTAL_RESPONSE, beta=1.0, seed=9)
        second = AgentPopulation(game, BehaviorModel.QUANTAL_RESPONSE, beta=1.0, seed=9)
        for round_index in range(1, 50):
            recommended = round_index % game.profile_count
            self.assertEqual(
                first.sample_response(mechanism, recommended, round_index),
                second.sample_response(mechanism, recommended, round_index),
            )

    def test_realized_actions_stay_in_response_sets(self):
        rng = np.random.default_rng(6)
        for model in BehaviorModel:
            game = random_game((3, 3), rng)
            population = AgentPopulation(game, model, beta=2.0, seed=1)
            for round_index in range(1, 100):
                mechanism = random_mechanism(game.indexing, rng)
                recommended = mechanism.sample(rng)
                realized = population.sample_response(mechanism, recommended, round_index)
                pairs = zip(game.indexing.decode(recommended), game.indexing.decode(realized))
                for agent, (rec, real) in enumerate(pairs):
                    self.assertIn(real, population.response_set(mechanism, agent, rec))
                    if real != rec:
                        self.assertGreaterEqual(incentive(game, mechanism, agent, rec, real), -1e-9)

    def test_feedback_record_checks_profiles(self):
        mechanism = Mechanism.uniform(ProfileIndexing((2, 2)))
        with self.assertRaises(IndexError):
            FeedbackRecord(mechanism, 0, 4, 1)


class MembershipTests(SimpleTestCase):
    def test_sample_budget(self):
        self.assertEqual(membership_sample_budget(3, 1.0, 2.0, 0.05), 67)
        with self.assertRaises(ValueError):
            membership_sample_budget(3, 1.0, 2.0, 1.0)

    def test_requires_quantal_model(self):
        population = AgentPopulation(dominant_game(), BehaviorModel.BEST_RESPONSE)
        with self.assertRaises(ValueError):
            population.verify_membership(Mechanism.uniform(population.game.indexing), 0, 0, 1, 0.05)

    def test_detection_frequency(self):
        """β = 1, C = 2, m = 3, δ = 0.05 em 200 sorteios."""
        rng = np.random.default_rng(2024)
        hits = members = false_positives = 0
        for trial in range(200):
            game = random_game((3, 3), rng, low=0.0, high=1.0)
            mechanism = random_mechanism(game.indexing, rng)
            population = AgentPopulation(
                game, BehaviorModel.QUANTAL_RESPONSE, beta=1.0, seed=trial, utility_bound=2.0
            )
            agent = trial % 2
            rec = int(rng.integers(3))
            for dev in range(3):
                if dev == rec:
                    continue
                observed = population.verify_membership(mechanism, agent, rec, dev, 0.05)
                if incentive(game, mechanism, agent, rec, dev) >= 0:
                    members += 1
                    hits += observed
                else:
                    false_positives += observed
        self.assertGreater(members, 0)
        self.assertGreaterEqual(hits / members, 0.95)
        self.assertEqual(false_positives, 0)

    def test_stops_at_first_observation(self):
        game = constant_game()
        # β·C = 10: orçamento de ~1.3·10^5 amostras, mas dev tem probabilidade 1/2
        population = AgentPopulation(game, BehaviorModel.QUANTAL_RESPONSE, beta=1.0, seed=7, utility_bound=10.0)
        mechanism = Mechanism.uniform(game.indexing)
        self.assertTrue(population.verify_membership(mechanism, 0, 0, 1, 0.05))
        self.assertLess(population.samples_drawn, 64)

        again = AgentPopulation(game, BehaviorModel.QUANTAL_RESPONSE, beta=1.0, seed=7, utility_bound=10.0)
        again.verify_membership(mechanism, 0, 0, 1, 0.05)
        self.assertEqual(again.samples_drawn, population.samples_drawn)

    def test_outside_deviation_uses_whole_budget(self):
        game = dominant_game()
        population = AgentPopulation(game, BehaviorModel.QUANTAL_RESPONSE, beta=2.0, seed=0, utility_bound=10.0)
        mechanism = Mechanism.point_mass(game.indexing, game.indexing.encode([1, 1]))
        self.assertFalse(population.verify_membership(mechanism, 0, 1, 0, 0.05))
        self.assertEqual(population.samples_drawn, membership_sample_budget(2, 2.0, 10.0, 0.05))

    def test_sampled_oracle_counts_samples(self):
        game = dominant_game()
        population = AgentPopulation(game, BehaviorModel.QUANTAL_RESPONSE, beta=0.5, seed=0, utility_bound=5.0)
        oracle = SampledOracle(population, 0.01)
        mechanism = Mechanism.point_mass(game.indexing, 0)
        self.assertEqual(oracle.response_set(mechanism, 0, 0), frozenset({0, 1}))
        self.assertGreater(population.samples_drawn, 0)


class TranscriptOracleTests(SimpleTestCase):
    def setUp(self):
        self.game = dominant_game()
        self.mechanism = Mechanism.point_mass(self.game.indexing, 0)

    def test_recording_and_replay(self):
        recorder = RecordingOracle(IdealizedOracle(self.game))
        recorder.response_set(self.mechanism, 0, 0)
        recorder.is_member(self.mechanism, 1, 0, 1)
        self.assertEqual([e["query"] for e in recorder.entries], ["sign", "ratio"])
        self.assertEqual(recorder.entries[0]["response"], [0, 1])
        self.assertIs(recorder.entries[1]["response"], True)

        replay = ReplayOracle(recorder.entries)
        self.assertEqual(replay.response_set(self.mechanism, 0, 0), frozenset({0, 1}))
        self.assertFalse(replay.exhausted)
        self.assertTrue(replay.is_member(self.mechanism, 1, 0, 1))
        self.assertTrue(replay.exhausted)

    def test_replay_rejects_divergent_queries(self):
        recorder = RecordingOracle(IdealizedOracle(self.game))
        recorder.response_set(self.mechanism, 0, 0)

        with self.assertRaises(ValueError):
            ReplayOracle(recorder.entries).response_set(Mechanism.uniform(self.game.indexing), 0, 0)
        with self.assertRaises(ValueError):
            ReplayOracle(recorder.entries).is_member(self.mechanism, 0, 0, 1)
        replay = ReplayOracle(recorder.entries)
        replay.response_set(self.mechanism, 0, 0)
        with self.assertRaises(ValueError):
            replay.response_set(self.mechanism, 0, 0)
