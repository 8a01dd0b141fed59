import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from securekg.exceptions import BadSlot, ParseError, UnknownEntity, UnknownRelation
from securekg.fixtures import DATA_DIR, fixture_config
from securekg.kgstore import (
    PropertySlot, RelationDictionary, SharedCell, SlotKind, adjacency, load_kg, load_saved_kg, make_schema,
    save_kg,
)
from securekg.pipeline import open_session

SCHEMA = make_schema([{'name': 'score'}, {'name': 'label', 'kind': 'discrete'}])
RELATIONS = RelationDictionary({'works_for': 1, 'knows': 2})


class LoadTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def write(self, name, text):
        path = self.dir / name
        path.write_text(text)
        return path

    def test_load_fixture_party(self):
        base = DATA_DIR / 'companies'
        kg = load_kg(base / 'party_a_triples.tsv', base / 'party_a_properties.csv', SCHEMA, party=1,
                     keys_path=base / 'party_a_keys.csv', relations=RELATIONS)
        self.assertEqual(kg.size, 4)
        self.assertEqual(len(kg.triples), 4)
        self.assertEqual(kg.entities[kg.entity_index('Jim')].key, 'jim butler')
        self.assertEqual(kg.properties[kg.entity_index('Alice')][0].value, 0.8)
        self.assertEqual(str(kg), 'Party 1: 4 entities, 4 triples')

    def test_bad_property_header(self):
        props = self.write('p.csv', 'name,score,label\nA,1,2\n')
        with self.assertRaises(ParseError):
            load_kg(self.write('t.tsv', ''), props, SCHEMA)

    def test_bad_field_count_reports_line(self):
        props = self.write('p.csv', 'entity,score,label\nA,1,2\nB,1\n')
        with self.assertRaises(ParseError) as ctx:
            load_kg(self.write('t.tsv', ''), props, SCHEMA)
        self.assertEqual(ctx.exception.line, 3)

    def test_unknown_entity_and_relation_in_triples(self):
        props = self.write('p.csv', 'entity,score,label\nA,1,2\nB,0,1\n')
        with self.assertRaises(UnknownEntity) as ctx:
            load_kg(self.write('t.tsv', 'A\t1\tB\nA\t1\tC\n'), props, SCHEMA)
        self.assertNotIsInstance(ctx.exception, ParseError)
        self.assertIn('t.tsv:2', str(ctx.exception))
        with self.assertRaises(ParseError):
            load_kg(self.write('t.tsv', 'A\tfriends\tB\n'), props, SCHEMA, relations=RELATIONS)

    def test_self_loops(self):
        props = self.write('p.csv', 'entity,score,label\nA,1,2\n')
        triples = self.write('t.tsv', 'A\t1\tA\n')
        with self.assertRaises(ParseError):
            load_kg(triples, props, SCHEMA)
        self.assertEqual(len(load_kg(triples, props, SCHEMA, allow_self_loops=True).triples), 1)

    def test_unknown_category(self):
        schema = make_schema([{'name': 'sector', 'kind': 'categorical', 'categories': ['bank', 'retail']}])
        props = self.write('p.csv', 'entity,sector\nA,bank\nB,mining\n')
        with self.assertRaises(ParseError):
            load_kg(self.write('t.tsv', ''), props, schema)


class SchemaTests(SimpleTestCase):
    def test_categorical_slots(self):
        slot = PropertySlot('sector', SlotKind.CATEGORICAL, ('bank', 'retail'))
        self.assertEqual(slot.width, 2)
        self.assertEqual(slot.numeric('retail'), 1.0)
        with self.assertRaises(BadSlot):
            slot.category_index('mining')

    def test_relation_dictionary(self):
        self.assertEqual(RELATIONS.resolve('knows'), 2)
        self.assertEqual(RELATIONS.resolve('7'), 7)
        self.assertEqual(RELATIONS.name(1), 'works_for')
        self.assertIn('works_for', RELATIONS)
        self.assertNotIn('friends', RELATIONS)
        with self.assertRaises(UnknownRelation):
            RELATIONS.resolve('friends')


class MergedStoreTests(SimpleTestCase):
    def test_adjacency_directions(self):
        universe = open_session(fixture_config('companies')).universe
        out = universe.adjacency(1, 2)
        alice, jb = universe.entity_id('Alice'), universe.entity_id('Jim Butler')
        self.assertEqual(out[alice, jb], 1)
        np.testing.assert_array_equal(adjacency(universe.graphs[0], 2, 'in', universe.size), out.T)

    def test_saved_store_reloads_bit_exact(self):
        session = open_session(fixture_config('companies'))
        kg = session.universe.graphs[1]
        with tempfile.TemporaryDirectory() as tmp:
            save_kg(kg, tmp)
            loaded = load_saved_kg(tmp, session.universe.schema, party=2)
        self.assertEqual([e.local_name for e in loaded.entities], [e.local_name for e in kg.entities])
        self.assertEqual(loaded.triples, kg.triples)
        jb = session.universe.entity_id('Jim Butler')
        self.assertTrue(all(isinstance(cell, SharedCell) for cell in loaded.properties[jb]))
        self.assertEqual(loaded.properties[jb], kg.properties[jb])
        self.assertEqual(loaded.properties, kg.properties)
