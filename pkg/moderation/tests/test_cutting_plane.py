import time
from unittest import mock

import numpy as np
from django.test import SimpleTestCase

from moderation.services.behavior import AgentPopulation, BehaviorModel, FeedbackRecord
from moderation.services.ce_solver import StackedLayout, round_regret, stack_game
from moderation.services.cutting_plane import (
    KnowledgeSet,
    SeparatingHyperplane,
    _hit_and_run_step,
    build_oracle_cut,
    buffered_centroid,
    interior_start,
    run_low_regret,
)
from moderation.services.exceptions import CESolverError, RunAbortedError
from moderation.services.experiments import RandomGameGenerator
from moderation.services.game_core import Mechanism

from .fixtures import constant_game, dominant_game, random_game, random_mechanism


class OracleCutTests(SimpleTestCase):
    def test_cut_reproduces_total_incentive(self):
        """⟨w⋆, q⟩ = Σ_i φ_i em 1000 sorteios."""
        rng = np.random.default_rng(42)
        shapes = [(2, 2), (2, 3), (3, 3), (2, 2, 2)]
        for trial in range(1000):
            game = random_game(shapes[trial % 4], rng)
            mechanism = random_mechanism(game.indexing, rng)
            recommended, realized = rng.choice(game.profile_count, size=2, replace=False)
            w = stack_game(game)
            cut = build_oracle_cut(mechanism, int(recommended), int(realized), w.layout)
            feedback = FeedbackRecord(mechanism, int(recommended), int(realized), trial)
            self.assertLessEqual(abs(w.values @ cut.normal - round_regret(game, feedback)), 1e-12)

    def test_provenance(self):
        game = dominant_game()
        layout = StackedLayout(game.indexing)
        cut = build_oracle_cut(Mechanism.point_mass(game.indexing, 0), 0, 2, layout)
        self.assertEqual(cut.provenance, ((0, 0, 1),))
        np.testing.assert_allclose(cut.normal, [1, 0, 0, 0])

    def test_no_deviation(self):
        game = dominant_game()
        with self.assertRaises(ValueError):
            build_oracle_cut(Mechanism.uniform(game.indexing), 1, 1, StackedLayout(game.indexing))


class KnowledgeSetTests(SimpleTestCase):
    def test_apply_cut_normalizes(self):
        knowledge = KnowledgeSet(3).apply_cut(SeparatingHyperplane(np.array([0.0, 2.0, 0.0]), ()))
        np.testing.assert_allclose(knowledge.normals, [[0, 1, 0]])
        self.assertIs(knowledge.apply_cut(SeparatingHyperplane(np.zeros(3), ())), knowledge)
        with self.assertRaises(ValueError):
            knowledge.apply_cut(SeparatingHyperplane(np.zeros(2), ()))

    def test_contains(self):
        knowledge = KnowledgeSet(2, [[1.0, 0.0]])
        np.testing.assert_array_equal(
            knowledge.contains(np.array([[0.5, 0.5], [-0.1, 0.0], [1.0, 1.0]])), [True, False, False]
        )

    def test_project_and_distance(self):
        knowledge = KnowledgeSet(3, [[0.0, 1.0, 0.0]])
        np.testing.assert_allclose(knowledge.project([2.0, 0.0, 0.0]), [[1.0, 0.0, 0.0]], atol=1e-9)
        np.testing.assert_allclose(knowledge.project([0.5, -0.5, 0.0]), [[0.5, 0.0, 0.0]], atol=1e-9)
        distances = knowledge.distance(np.array([[0.5, -0.5, 0.0], [0.1, 0.1, 0.1], [0.0, -2.0, 0.0]]))
        np.testing.assert_allclose(distances, [0.5, 0.0, 2.0], atol=1e-8)

    def test_distance_needs_alternating_projections(self):
        knowledge = KnowledgeSet(2, [[1.0, 0.0], [0.0, 1.0]])
        point = np.array([[-1.0, 3.0]])
        # projeção exata: (0, 1)
        np.testing.assert_allclose(knowledge.distance(point), [np.hypot(1.0, 2.0)], atol=1e-6)

    def test_within_buffer(self):
        knowledge = KnowledgeSet(2, [[1.0, 0.0], [0.0, 1.0]])
        points = np.array([[0.5, 0.5], [-0.05, 0.5], [-0.05, -0.05], [-0.2, 0.5], [0.0, 1.04]])
        # (−0.05, −0.05) está a 0.0707 do canto
        np.testing.assert_array_equal(knowledge.within(points, 0.06), [True, True, False, False, True])
        np.testing.assert_array_equal(knowledge.within(points, 0.08), [True, True, True, False, True])

    def test_interior_start(self):
        knowledge = KnowledgeSet(3, [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
        start = interior_start(knowledge)
        self.assertTrue(np.all(knowledge.normals @ start > 0))
        self.assertAlmostEqual(np.linalg.norm(start), 0.5)
        np.testing.assert_array_equal(interior_start(KnowledgeSet(3)), np.zeros(3))

        flat = KnowledgeSet(1, [[1.0], [-1.0]])
        np.testing.assert_array_equal(interior_start(flat), [0.0])


class BufferedCentroidTests(SimpleTestCase):
    def test_parameter_validation(self):
        with self.assertRaises(ValueError):
            buffered_centroid(KnowledgeSet(2), 0.01, budget=999)
        with self.assertRaises(ValueError):
            buffered_centroid(KnowledgeSet(2), 0.0)

    def test_ball_centroid_near_origin(self):
        estimate = buffered_centroid(KnowledgeSet(3), 0.01, rng=np.random.default_rng(0))
        self.assertGreaterEqual(estimate.samples, 1000)
        self.assertLess(np.linalg.norm(estimate.point), 0.25)
        self.assertEqual(estimate.standard_error.shape, (3,))

    def test_half_ball_centroid(self):
        knowledge = KnowledgeSet(3, [[1.0, 0.0, 0.0]])
        estimate = buffered_centroid(knowledge, 0.01, rng=np.random.default_rng(1))
        self.assertGreater(estimate.point[0], 0.2)
        self.assertLess(abs(estimate.point[1]), 0.15)

    def test_chains_stay_in_buffered_set(self):
        knowledge = KnowledgeSet(3, [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.6, 0.0, 0.8]])
        rng = np.random.default_rng(4)
        points = np.tile(interior_start(knowledge), (32, 1))
        for _ in range(300):
            points = _hit_and_run_step(points, knowledge, 0.01, rng)
            self.assertTrue(np.all(knowledge.distance(points) <= 0.01 + 1e-9))
        self.assertGreater(len(np.unique(points.round(6), axis=0)), 1)

    def test_reproducible_with_seed(self):
        knowledge = KnowledgeSet(2, [[0.0, 1.0]])
        first = buffered_centroid(knowledge, 0.05, rng=np.random.default_rng(3))
        second = buffered_centroid(knowledge, 0.05, rng=np.random.default_rng(3))
        np.testing.assert_array_equal(first.point, second.point)


class LowRegretTests(SimpleTestCase):
    def _audit(self, result):
        for row in result.transcript:
            self.assertGreaterEqual(row["regret"], 0.0)
            if row["cut_applied"]:
                self.assertGreaterEqual(row["cut_true"], -1e-9)
                self.assertLessEqual(row["cut_query"], 1e-8)
                self.assertLessEqual(row["regret"], row["cut_true"] - row["cut_query"] + 1e-9)

    def test_best_response_run(self):
        population = AgentPopulation(dominant_game(), BehaviorModel.BEST_RESPONSE, seed=0)
        result = run_low_regret(population, 12, seed=5)
        self.assertEqual(result.ledger.rounds, 12)
        self.assertEqual(len(result.transcript), 12)
        self._audit(result)
        self.assertTrue(result.knowledge.contains(result.true_parameter, tol=1e-9)[0])
        self.assertAlmostEqual(np.linalg.norm(result.true_parameter), 1.0)

    def test_quantal_response_run(self):
        population = AgentPopulation(dominant_game(), BehaviorModel.QUANTAL_RESPONSE, beta=2.0, seed=1)
        result = run_low_regret(population, 10, seed=6)
        self._audit(result)

    def test_deterministic(self):
        runs = []
        for _ in range(2):
            population = AgentPopulation(dominant_game(), BehaviorModel.BEST_RESPONSE, seed=2)
            runs.append(run_low_regret(population, 8, seed=9))
        self.assertEqual(runs[0].transcript, runs[1].transcript)

    def test_constant_game_has_zero_regret(self):
        population = AgentPopulation(constant_game(), BehaviorModel.BEST_RESPONSE, seed=0)
        result = run_low_regret(population, 6, seed=0)
        self.assertEqual(result.ledger.total, 0.0)

    def test_abort_keeps_partial_transcript(self):
        population = AgentPopulation(dominant_game(), BehaviorModel.BEST_RESPONSE, seed=0)
        with mock.patch(
            "moderation.services.cutting_plane.solve_ce", side_effect=CESolverError("falha simulada")
        ):
            with self.assertRaises(RunAbortedError) as context:
                run_low_regret(population, 5, seed=0)
        self.assertEqual(context.exception.transcript, [])

    def test_invalid_horizon(self):
        population = AgentPopulation(dominant_game(), BehaviorModel.BEST_RESPONSE)
        with self.assertRaises(ValueError):
            run_low_regret(population, 0)

    def test_three_by_three_run_finishes_quickly(self):
        game = RandomGameGenerator((3, 3), seed=3).generate()
        population = AgentPopulation(game, BehaviorModel.BEST_RESPONSE, seed=0)
        started = time.perf_counter()
        result = run_low_regret(population, 30, seed=1)
        self.assertLess(time.perf_counter() - started, 120.0)
        self.assertEqual(result.knowledge.dimension, 12)
        self._audit(result)

    def test_regret_flattens_with_horizon(self):
        """Regret por rodada some na cauda e Reg(T)/(N·log T) não cresce com T."""
        horizons = (250, 500, 1000, 2000)
        for model, beta in ((BehaviorModel.BEST_RESPONSE, 0.0), (BehaviorModel.QUANTAL_RESPONSE, 2.0)):
            curves = []
            for seed in range(3):
                population = AgentPopulation(dominant_game(), model, beta=beta, seed=seed)
                result = run_low_regret(population, horizons[-1], seed=seed)
                self._audit(result)
                values = result.ledger.values
                window = len(values) // 10
                self.assertLessEqual(values[-window:].mean(), 0.1 * values[:window].mean() + 1e-12)
                curves.append(result.ledger.cumulative)
            mean = np.mean(curves, axis=0)
            dimension = result.knowledge.dimension
            normalized = [mean[horizon - 1] / (dimension * np.log(horizon)) for horizon in horizons]
            for earlier, later in zip(normalized, normalized[1:]):
                self.assertLessEqual(later, 1.2 * earlier + 1e-12)
