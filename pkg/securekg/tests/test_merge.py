import numpy as np
from django.test import SimpleTestCase

from securekg import mpc
from securekg.exceptions import IncompatibleRule, InvalidPartyCount, NotCommonEntity, UnknownEntityName
from securekg.features import canonical_key, feature_vector, jaccard, trigrams
from securekg.fixtures import fixture_config, random_party_graphs
from securekg.kgstore import PlainCell, PropertySlot, RelationDictionary, SlotKind, to_shared
from securekg.merge import (
    MatchKind, MergePolicy, MergeRule, SlotRule, encode_for_merge, link_entities, merge_kgs, merge_properties,
    psi_align, share_features,
)
from securekg.numeric import DEFAULT_CONFIG, decode_array
from securekg.oracles import plain_merge
from securekg.pipeline import build_runtime, open_session

from .factories import company_names

AGE = (PropertySlot('age'),)
GENDER = (PropertySlot('gender', SlotKind.CATEGORICAL, ('M', 'F')),)


def merge_values(parties, values, schema, policy):
    runtime = build_runtime(parties, seed=3)
    rows = [mpc.input_share(runtime, party, encode_for_merge([PlainCell(v) for v in row], schema, runtime.config))
            for party, row in enumerate(values, start=1)]
    merged = merge_properties(runtime, rows, schema, policy)
    return decode_array(mpc.reconstruct_array(merged))


class PolicyTests(SimpleTestCase):
    def test_defaults_by_slot_kind(self):
        policy = MergePolicy()
        self.assertEqual(policy.rule_for(AGE[0]).rule, MergeRule.AVERAGE)
        self.assertEqual(policy.rule_for(GENDER[0]).rule, MergeRule.MAJORITY)

    def test_incompatible_rules(self):
        with self.assertRaises(IncompatibleRule):
            MergePolicy({'gender': SlotRule(MergeRule.MAX)}).validate(GENDER)
        with self.assertRaises(IncompatibleRule):
            MergePolicy({'age': SlotRule(MergeRule.MAJORITY)}).validate(AGE)
        with self.assertRaises(IncompatibleRule):
            MergePolicy({'height': SlotRule(MergeRule.MAX)}).validate(AGE)
        with self.assertRaises(IncompatibleRule):
            MergePolicy({'age': SlotRule(MergeRule.WEIGHTED_AVERAGE, (0.5, 0.6))}).validate(AGE)

    def test_from_config(self):
        policy = MergePolicy.from_config({'age': {'rule': 'weighted_average', 'weights': [0.25, 0.75]}})
        self.assertEqual(policy.rules['age'], SlotRule(MergeRule.WEIGHTED_AVERAGE, (0.25, 0.75)))
        self.assertEqual(policy.describe(AGE), {'age': 'weighted_average'})


class PropertyMergeTests(SimpleTestCase):
    def test_average_of_two_ages_is_exact(self):
        self.assertEqual(merge_values(2, [[23.0], [15.0]], AGE, MergePolicy())[0], 19.0)

    def test_numeric_rules(self):
        values = [[12.5], [-3.0], [7.25]]
        for rule, expected in ((MergeRule.MAX, 12.5), (MergeRule.MIN, -3.0)):
            merged = merge_values(3, values, AGE, MergePolicy({'age': SlotRule(rule)}))
            self.assertEqual(merged[0], expected)
        weighted = MergePolicy({'age': SlotRule(MergeRule.WEIGHTED_AVERAGE, (0.25, 0.25, 0.5))})
        self.assertLessEqual(abs(merge_values(3, values, AGE, weighted)[0] - 6.0), 2 * DEFAULT_CONFIG.ulp)

    def test_majority_vote(self):
        merged = merge_values(3, [['M'], ['F'], ['F']], GENDER, MergePolicy())
        self.assertEqual(GENDER[0].categories[int(merged[0])], 'F')

    def test_majority_tie_goes_to_first_category(self):
        merged = merge_values(2, [['F'], ['M']], GENDER, MergePolicy())
        self.assertEqual(merged[0], 0.0)

    def test_mixed_schema_matches_plaintext_merge(self):
        schema = AGE + GENDER
        values = [[30.0, 'F'], [41.0, 'M'], [20.0, 'F']]
        policy = MergePolicy({'age': SlotRule(MergeRule.MAX)})
        expected = plain_merge(values, schema, policy)
        merged = merge_values(3, values, schema, policy)
        self.assertEqual(expected, [41.0, 'F'])
        self.assertEqual(list(merged), [41.0, 1.0])

    def test_weight_count_must_match_rows(self):
        policy = MergePolicy({'age': SlotRule(MergeRule.WEIGHTED_AVERAGE, (0.5, 0.5))})
        with self.assertRaises(IncompatibleRule):
            merge_values(3, [[1.0], [2.0], [3.0]], AGE, policy)


class LinkingTests(SimpleTestCase):
    def test_similar_names_are_linked(self):
        runtime = build_runtime(2, seed=4)
        targets = share_features(runtime, 1, ['Acme Holdings', 'Blue River'])
        candidates = share_features(runtime, 2, ['Zenith Marine', 'Acme Holding'])
        result = link_entities(runtime, targets, candidates)
        self.assertEqual(result.kind, MatchKind.LINKED)
        self.assertEqual(result.common, [('Acme Holdings', 'Acme Holding')])
        expected = jaccard(feature_vector('Acme Holdings'), feature_vector('Acme Holding'))
        self.assertAlmostEqual(result.similarities[0], expected, places=3)

    def test_each_candidate_is_used_once(self):
        runtime = build_runtime(2, seed=5)
        targets = share_features(runtime, 1, ['Northwind Trading', 'Northwind Trader'])
        candidates = share_features(runtime, 2, ['Northwind Trading'])
        result = link_entities(runtime, targets, candidates)
        self.assertEqual(result.common, [('Northwind Trading', 'Northwind Trading')])

    def test_surname_links_to_full_name(self):
        runtime = build_runtime(2, seed=6)
        targets = share_features(runtime, 1, ['Albert Einstein'])
        candidates = share_features(runtime, 2, ['Einstein', 'Alan Turing'])
        result = link_entities(runtime, targets, candidates)
        self.assertEqual(result.common, [('Albert Einstein', 'Einstein')])
        expected = jaccard(feature_vector('Albert Einstein'), feature_vector('Einstein'))
        self.assertAlmostEqual(expected, 5 / 9, places=4)
        self.assertAlmostEqual(result.similarities[0], expected, delta=2e-3)

    def test_linking_is_symmetric(self):
        first = ['Acme Holdings', 'Blue River', 'Northwind Trading']
        second = ['Acme Holding', 'Northwind Trader', 'Zenith Marine']
        runtime = build_runtime(2, seed=7)
        forward = link_entities(runtime, share_features(runtime, 1, first), share_features(runtime, 2, second))
        backward = link_entities(runtime, share_features(runtime, 2, second), share_features(runtime, 1, first))
        self.assertEqual(len(forward.common), 2)
        self.assertEqual(sorted((b, a) for a, b in forward.common), sorted(backward.common))
        there = dict(zip(forward.common, forward.similarities))
        back = {(a, b): s for (b, a), s in zip(backward.common, backward.similarities)}
        for pair, similarity in there.items():
            self.assertAlmostEqual(similarity, back[pair], delta=2e-3)

    def test_no_candidates(self):
        runtime = build_runtime(2)
        result = link_entities(runtime, share_features(runtime, 1, ['A']), share_features(runtime, 2, []))
        self.assertEqual(result.common, [])

    def test_names_without_trigrams_never_link(self):
        self.assertEqual(jaccard(feature_vector('   '), feature_vector('')), 0.0)
        runtime = build_runtime(2, seed=8)
        targets = share_features(runtime, 1, ['   ', 'Acme Holdings'])
        candidates = share_features(runtime, 2, ['  ', 'Acme Holding'])
        result = link_entities(runtime, targets, candidates, threshold=0.05)
        self.assertEqual(result.common, [('Acme Holdings', 'Acme Holding')])

    def test_trigram_features(self):
        self.assertEqual(canonical_key('  Jim   BUTLER '), 'jim butler')
        self.assertEqual(trigrams('Jim Butler'), {'jim', 'but', 'utl', 'tle', 'ler'})
        self.assertEqual(trigrams('C1'), {'c1'})


class UniverseTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.session = open_session(fixture_config('companies'))
        cls.universe = cls.session.universe

    def test_global_ids_follow_canonical_keys(self):
        self.assertEqual(self.universe.names, ['Alice', 'Bob', 'C1', 'C2', 'Jim Butler', 'Lee', 'Sam'])
        self.assertEqual(self.universe.entity_id('Jim Butler'), 4)
        self.assertEqual(self.universe.entity_id('butler'), 4)
        self.assertEqual(self.universe.entity_id('Jim'), 4)

    def test_common_row_is_merged(self):
        jb = self.universe.entity_id('Jim Butler')
        self.assertEqual(self.universe.common_entities(), [jb])
        row = decode_array(mpc.reconstruct_array(self.universe.shared_row(jb)))
        self.assertTrue(np.all(np.abs(row - [0.8, 1.0]) <= 2 * DEFAULT_CONFIG.ulp))

    def test_alignment_report(self):
        report = self.universe.report()
        aligned = [m for m in report['matched'] if m['kind'] == 'aligned']
        self.assertEqual(aligned[0]['pairs'], [['Jim', 'Butler']])
        self.assertEqual(report['common'], ['Jim Butler'])
        self.assertEqual(report['global_ids'][4]['members'], [[1, 'Jim'], [2, 'Butler']])

    def test_private_rows_stay_with_owner(self):
        alice = self.universe.entity_id('Alice')
        self.assertIn(alice, self.universe.graphs[0].properties)
        self.assertNotIn(alice, self.universe.graphs[1].properties)
        with self.assertRaises(NotCommonEntity):
            self.universe.shared_row(alice)

    def test_unknown_name(self):
        with self.assertRaises(UnknownEntityName):
            self.universe.entity_id('Mallory')

    def test_feature_matrix_holds_every_row(self):
        runtime = build_runtime(2, seed=9)
        x = decode_array(mpc.reconstruct_array(self.universe.feature_matrix(runtime)))
        self.assertEqual(x.shape, (7, 2))
        lee = x[self.universe.entity_id('Lee')]
        self.assertAlmostEqual(lee[0], 0.3, places=4)
        self.assertEqual(lee[1], 0.0)

    def test_merging_is_deterministic(self):
        again = open_session(fixture_config('companies'))
        self.assertEqual(again.runtime.transcript.digest(), self.session.runtime.transcript.digest())

    def test_guarantee_fixture_uses_max(self):
        universe = open_session(fixture_config('guarantee')).universe
        self.assertEqual(universe.names, ['E1', 'E2', 'E3', 'E4', 'E5'])
        merged = {universe.names[g]: float(decode_array(mpc.reconstruct_array(universe.shared_row(g)))[0])
                  for g in universe.common_entities()}
        self.assertEqual(merged, {'E1': 12.5, 'E2': 4.0, 'E3': 8.75, 'E5': 5.0})

    def test_random_universes_align_exact_keys(self):
        rng = np.random.default_rng(17)
        names = company_names(20, seed=17)
        graphs = random_party_graphs(rng, len(names), names=names)
        runtime = build_runtime(2, seed=17)
        universe = merge_kgs(runtime, graphs, MergePolicy(), relations=RelationDictionary(), link=False)
        keys = [{e.key for e in kg.entities} for kg in graphs]
        self.assertEqual(universe.size, len(names))
        self.assertEqual({universe.entities[g].key for g in universe.common_entities()}, keys[0] & keys[1])

    def test_single_graph_cannot_merge(self):
        with self.assertRaises(InvalidPartyCount):
            merge_kgs(build_runtime(2), self.session.graphs[:1], MergePolicy())

    def test_rows_only_shared_for_common_entities(self):
        jb, alice = self.universe.entity_id('Jim Butler'), self.universe.entity_id('Alice')
        row = self.universe.shared_row(jb)
        with self.assertRaises(NotCommonEntity):
            to_shared(self.universe.graphs, alice, row)
        cells = to_shared(self.universe.graphs, jb, row)
        self.assertEqual(len(cells), 2)
        self.assertEqual([cell.share.raw for cell in cells[1]], [int(v) for v in row.party_share(2)])


class AlignmentTests(SimpleTestCase):
    def test_psi_alignment_pairs_identical_keys(self):
        result = psi_align({'jim butler', 'alice'}, {'jim butler', 'lee'}, seed=2)
        self.assertEqual(result.kind, MatchKind.ALIGNED)
        self.assertEqual(result.common, [('jim butler', 'jim butler')])
        self.assertEqual(result.as_dict()['parties'], [1, 2])
