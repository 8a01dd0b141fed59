import json
import tempfile
from pathlib import Path

from django.test import SimpleTestCase, TestCase, override_settings
from rest_framework import serializers

from securekg.conf import load_run_config, secure_kg_setting
from securekg.fixtures import DATA_DIR, fixture_config
from securekg.kgstore import SlotKind
from securekg.models import ProtocolRun
from securekg.pipeline import build_runtime
from securekg.serializers import ProtocolRunSerializer, RunConfigSerializer

from .factories import EntityFactory, ProtocolRunFactory

VALID = {
    'parties': [{'triples': 'a.tsv', 'properties': 'a.csv'}, {'triples': 'b.tsv', 'properties': 'b.csv'}],
    'schema': [{'name': 'score'}, {'name': 'sector', 'kind': 'categorical', 'categories': ['bank', 'retail']}],
}


class ProtocolRunTests(TestCase):
    def test_str_and_ordering(self):
        first = ProtocolRunFactory(command='merge', seed=7)
        second = ProtocolRunFactory(command='query', status='error')
        self.assertEqual(str(first), 'merge seed=7 (ok)')
        self.assertEqual(ProtocolRun.objects.count(), 2)
        self.assertIn(second, ProtocolRun.objects.filter(status='error'))

    def test_record_takes_traffic_from_runtime(self):
        runtime = build_runtime(2, seed=9)
        runtime.post(1, 2, 'hello', b'\x01\x02')
        runtime.collect(2, 1, 'hello')
        runtime.barrier()
        run = ProtocolRun.record('query', runtime, summary={'result': []})
        self.assertEqual(run.seed, 9)
        self.assertEqual(run.rounds, 1)
        self.assertEqual(run.party_messages, 1)
        self.assertEqual(run.transcript_digest, runtime.transcript.digest())

    def test_record_without_runtime(self):
        run = ProtocolRun.record('selftest', status='failed', seed=3)
        self.assertEqual((run.seed, run.rounds, run.status), (3, 0, 'failed'))

    def test_serializer_shows_command_label(self):
        data = ProtocolRunSerializer(ProtocolRunFactory(command='demo_loop')).data
        self.assertEqual(data['command_display'], 'Guarantee loop demo')
        self.assertIn('transcript_digest', data)


class RunConfigSerializerTests(SimpleTestCase):
    def validate(self, overrides):
        serializer = RunConfigSerializer(data={**VALID, **overrides})
        return serializer, serializer.is_valid()

    def test_valid_config(self):
        serializer, valid = self.validate({})
        self.assertTrue(valid, serializer.errors)
        self.assertIn('schema', serializer.fields)
        self.assertEqual(len(serializer.validated_data['schema']), 2)
        schema = serializer.slot_schema()
        self.assertEqual([slot.name for slot in schema], ['score', 'sector'])
        self.assertEqual(schema[1].kind, SlotKind.CATEGORICAL)

    def test_rejects_a_single_party(self):
        serializer, valid = self.validate({'parties': VALID['parties'][:1]})
        self.assertFalse(valid)
        self.assertIn('parties', serializer.errors)

    def test_rejects_duplicate_slots(self):
        serializer, valid = self.validate({'schema': [{'name': 'score'}, {'name': 'score'}]})
        self.assertFalse(valid)
        self.assertIn('schema', serializer.errors)

    def test_categorical_slots_need_categories(self):
        _, valid = self.validate({'schema': [{'name': 'sector', 'kind': 'categorical'}]})
        self.assertFalse(valid)

    def test_policy_must_fit_the_schema(self):
        serializer, valid = self.validate({'policy': {'sector': {'rule': 'max'}}})
        self.assertFalse(valid)
        self.assertIn('policy', serializer.errors)

    def test_dealer_file_mode_needs_a_path(self):
        _, valid = self.validate({'dealer': {'mode': 'file'}})
        self.assertFalse(valid)

    def test_unknown_psi_group(self):
        _, valid = self.validate({'psi_group': 'p17'})
        self.assertFalse(valid)
        for group in ('x25519', 'ffdhe2048', 'ffdhe3072'):
            serializer, valid = self.validate({'psi_group': group})
            self.assertTrue(valid, serializer.errors)


class RunConfigLoadingTests(SimpleTestCase):
    def test_fixture_paths_resolve_next_to_the_config(self):
        config = load_run_config(fixture_config('companies'))
        self.assertEqual(config.party_count, 2)
        self.assertEqual(config.parties[0].triples, (DATA_DIR / 'companies' / 'party_a_triples.tsv').resolve())
        self.assertEqual(config.seed, 2021)
        self.assertEqual(config.fixed_point.frac_bits, 16)
        self.assertEqual(config.relations, {'works_for': 1, 'knows': 2})

    def test_seed_override(self):
        self.assertEqual(load_run_config(fixture_config('guarantee'), seed=44).seed, 44)

    def test_invalid_file_raises_validation_error(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'bad.json'
            path.write_text(json.dumps({'parties': []}))
            with self.assertRaises(serializers.ValidationError):
                load_run_config(path)

    @override_settings(SECURE_KG={'LINK_THRESHOLD': 0.7})
    def test_settings_supply_defaults(self):
        self.assertEqual(secure_kg_setting('LINK_THRESHOLD'), 0.7)
        self.assertEqual(secure_kg_setting('FEATURE_DIM'), 128)
        self.assertEqual(load_run_config(fixture_config('companies')).link_threshold, 0.7)

    def test_unknown_fixture(self):
        with self.assertRaises(ValueError):
            fixture_config('banks')

    def test_entity_factory_keys(self):
        entity = EntityFactory(local_name='  Acme   Holdings ')
        self.assertEqual(entity.key, 'acme holdings')
