import numpy as np
from django.test import SimpleTestCase

from securekg import mpc, oracles
from securekg.complete import (
    ScorerBank, TripleScorer, build_property_head, complete_property, rank_candidates, rank_scores,
    score_candidates, score_triple,
)
from securekg.embed import embed_universe, fit_sigmoid_poly
from securekg.exceptions import DimensionMismatch, EmptyCandidates
from securekg.fixtures import fixture_config
from securekg.numeric import DEFAULT_CONFIG, decode_array, encode_array
from securekg.pipeline import build_runtime, open_session

BOUND = 2.0 ** (5 - DEFAULT_CONFIG.frac_bits)


def opened(values):
    return decode_array(mpc.reconstruct_array(values))


class ScoringTests(SimpleTestCase):
    def setUp(self):
        self.runtime = build_runtime(2, seed=11)
        rng = np.random.default_rng(11)
        self.activation = fit_sigmoid_poly()
        self.raw_head = encode_array(rng.uniform(-1, 1, 6))
        self.raw_tails = encode_array(rng.uniform(-1, 1, (20, 6)))
        self.raw_weight = encode_array(rng.uniform(-0.5, 0.5, (6, 1)))
        self.scorer = TripleScorer(mpc.input_share(self.runtime, 1, self.raw_weight), self.activation)
        self.head = mpc.input_share(self.runtime, 1, self.raw_head)
        self.tails = mpc.input_share(self.runtime, 2, self.raw_tails)

    def test_scores_match_fixed_point_oracle(self):
        scores = opened(score_candidates(self.runtime, self.head, self.tails, self.scorer))
        expected = decode_array(oracles.fx_scores(self.raw_head, self.raw_tails, self.raw_weight, self.activation,
                                                  DEFAULT_CONFIG))
        self.assertEqual(scores.shape, (20,))
        self.assertLessEqual(float(np.max(np.abs(scores - expected))), BOUND)

    def test_single_triple(self):
        score = opened(score_triple(self.runtime, self.head, self.tails[3], self.scorer))
        expected = decode_array(oracles.fx_scores(self.raw_head, self.raw_tails[3], self.raw_weight,
                                                  self.activation, DEFAULT_CONFIG))
        self.assertEqual(score.shape, (1,))
        self.assertLessEqual(abs(float(score[0] - expected[0])), BOUND)
        with self.assertRaises(DimensionMismatch):
            score_triple(self.runtime, self.head, self.tails, self.scorer)

    def test_scorer_weight_must_be_a_column(self):
        with self.assertRaises(DimensionMismatch):
            TripleScorer(mpc.input_share(self.runtime, 1, encode_array(np.zeros((6, 2)))), self.activation)

    def test_width_mismatch(self):
        narrow = mpc.input_share(self.runtime, 2, encode_array(np.zeros((3, 4))))
        with self.assertRaises(DimensionMismatch):
            score_candidates(self.runtime, self.head, narrow, self.scorer)

    def test_scorer_bank_reuses_relation_weights(self):
        bank = ScorerBank(self.runtime, 4, seed=1)
        first = bank.for_relation(2)
        self.assertIs(bank.for_relation(2), first)
        self.assertIsNot(bank.for_relation(1), first)
        self.assertEqual(first.weight.shape, (4, 1))
        np.testing.assert_array_equal(mpc.reconstruct_array(first.weight), oracles.plain_weights(4, 1, 1003,
                                                                                                  DEFAULT_CONFIG))


class RankingTests(SimpleTestCase):
    def setUp(self):
        self.runtime = build_runtime(3, seed=12)

    def scores(self, values):
        return mpc.input_share(self.runtime, 2, encode_array(np.array(values)))

    def test_order_breaks_ties_by_index(self):
        ranking = rank_scores(self.runtime, self.scores([0.2, 0.9, 0.9, -0.3]))
        self.assertEqual(ranking.order, [1, 2, 0, 3])
        self.assertIsNone(ranking.scores)

    def test_topk_and_opened_scores(self):
        ranking = rank_scores(self.runtime, self.scores([0.2, 0.9, 0.5, -0.3]), topk=2, open_scores=True)
        self.assertEqual(ranking.order, [1, 2])
        self.assertEqual(len(ranking.scores), 2)
        self.assertAlmostEqual(ranking.scores[0], 0.9, places=4)
        self.assertAlmostEqual(ranking.scores[1], 0.5, places=4)

    def test_random_scores_follow_plain_order(self):
        values = np.random.default_rng(12).uniform(-1, 1, 8)
        ranking = rank_scores(self.runtime, self.scores(values), topk=5)
        self.assertEqual(ranking.order, oracles.plain_rank(decode_array(encode_array(values)), topk=5))

    def test_no_candidates(self):
        with self.assertRaises(EmptyCandidates):
            rank_scores(self.runtime, mpc.zeros(self.runtime, (0,)))


class UniverseCompletionTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.session = open_session(fixture_config('companies'))
        cls.runtime, cls.universe = cls.session.runtime, cls.session.universe
        cls.store, cls.cfg, _ = embed_universe(cls.runtime, cls.universe, depth=1, dim=4, seed=3)

    def test_property_completion_matches_oracle(self):
        head = build_property_head(self.runtime, 4, 2, seed=3)
        lee = self.universe.entity_id('Lee')
        row = opened(complete_property(self.runtime, self.store.row(lee), head))
        expected = decode_array(oracles.fx_property(mpc.reconstruct_array(self.store.row(lee)),
                                                    mpc.reconstruct_array(head.weight), head.activation,
                                                    DEFAULT_CONFIG))
        self.assertEqual(row.shape, (2,))
        self.assertLessEqual(float(np.max(np.abs(row - expected[0]))), BOUND)
        self.assertEqual(opened(complete_property(self.runtime, self.store.final, head)).shape, (7, 2))

    def test_property_head_width_must_match(self):
        head = build_property_head(self.runtime, 3, 2, seed=3)
        with self.assertRaises(DimensionMismatch):
            complete_property(self.runtime, self.store.final, head)

    def test_candidates_are_ranked_by_global_id(self):
        scorer = ScorerBank(self.runtime, 4, seed=3).for_relation(1)
        alice = self.universe.entity_id('Alice')
        candidates = [g for g in range(self.universe.size) if g != alice]
        ranking = rank_candidates(self.runtime, self.store, alice, candidates, scorer, topk=3, open_scores=True)
        self.assertEqual(len(ranking.order), 3)
        self.assertNotIn(alice, ranking.order)
        self.assertTrue(set(ranking.order) <= set(candidates))
        self.assertEqual(ranking.scores, sorted(ranking.scores, reverse=True))

    def test_no_candidate_tails(self):
        scorer = ScorerBank(self.runtime, 4, seed=3).for_relation(1)
        with self.assertRaises(EmptyCandidates):
            rank_candidates(self.runtime, self.store, 0, [], scorer)
