import csv
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from securekg import mpc, oracles
from securekg.embed import (
    PolyActivation, activate, aggregate_mean, aggregate_pool, build_gnn, embed_universe, fit_residual,
    fit_sigmoid_poly, neighbourhoods, secure_loss,
)
from securekg.exceptions import DimensionMismatch, IsolatedVertex
from securekg.fixtures import fixture_config
from securekg.numeric import DEFAULT_CONFIG, decode_array, encode_array
from securekg.pipeline import build_runtime, open_session
from securekg.runtime import Disclosure

ULP = DEFAULT_CONFIG.ulp


def star():
    """Vertex 0 joined to 1 and 2 at party 1 and to 3 at party 2; vertex 4 isolated."""
    first, second = np.zeros((5, 5), dtype=np.int64), np.zeros((5, 5), dtype=np.int64)
    first[0, 1] = first[1, 0] = first[0, 2] = first[2, 0] = 1
    second[0, 3] = second[3, 0] = 1
    return [first, second]


class ActivationTests(SimpleTestCase):
    def test_sigmoid_fit_is_odd_and_close(self):
        activation = fit_sigmoid_poly()
        self.assertEqual(activation.q2, 0.0)
        self.assertAlmostEqual(activation.q0, 0.5, places=6)
        self.assertLessEqual(fit_residual(activation), 0.14)

    def test_fit_arguments(self):
        with self.assertRaises(ValueError):
            fit_sigmoid_poly(bound=0)
        with self.assertRaises(ValueError):
            fit_sigmoid_poly(degree=3)

    def test_shared_activation_matches_fixed_point_oracle(self):
        activation = PolyActivation(0.5, 0.25, 0.125)
        raw = encode_array(np.array([[-2.0, 0.3], [1.5, 4.0]]))
        for parties in (2, 3):
            runtime = build_runtime(parties, seed=parties)
            result = mpc.reconstruct_array(activate(runtime, mpc.input_share(runtime, 1, raw), activation))
            expected = oracles.fx_activate(raw, activation, DEFAULT_CONFIG)
            self.assertLessEqual(np.max(np.abs(decode_array(result) - decode_array(expected))), 4 * ULP)
            np.testing.assert_allclose(decode_array(result), activation(decode_array(raw)), atol=1e-3)


class AggregationTests(SimpleTestCase):
    def setUp(self):
        self.runtime = build_runtime(2, seed=7)
        self.plain = np.array([[0.0, 1.0], [2.0, -1.0], [4.0, 0.5], [-3.0, 2.0], [9.0, 9.0]])
        self.h = mpc.input_share(self.runtime, 2, encode_array(self.plain))

    def test_mean_with_public_degrees(self):
        result = decode_array(mpc.reconstruct_array(aggregate_mean(self.runtime, self.h, star())))
        np.testing.assert_allclose(result[0], self.plain[1:4].mean(axis=0), atol=2 * ULP)
        np.testing.assert_allclose(result[1], self.plain[0], atol=2 * ULP)
        np.testing.assert_array_equal(result[4], [0.0, 0.0])
        declared = self.runtime.transcript.declarations
        self.assertEqual([(tag, kind) for tag, kind, _ in declared], [('degree', Disclosure.DIVISOR)])

    def test_mean_matches_oracle(self):
        raw = encode_array(self.plain)
        result = mpc.reconstruct_array(aggregate_mean(self.runtime, self.h, star()))
        np.testing.assert_array_equal(
            np.abs(decode_array(result) - decode_array(oracles.fx_mean(raw, star(), DEFAULT_CONFIG))) <= 2 * ULP,
            np.ones_like(self.plain, dtype=bool))

    def test_secret_divisor_agrees_with_public_path(self):
        public = decode_array(mpc.reconstruct_array(aggregate_mean(self.runtime, self.h, star())))
        secret = decode_array(mpc.reconstruct_array(aggregate_mean(self.runtime, self.h, star(), secret_divisor=True)))
        np.testing.assert_allclose(secret, public, atol=2.0 ** -10)

    def test_isolated_vertices_can_be_rejected(self):
        with self.assertRaises(IsolatedVertex):
            aggregate_mean(self.runtime, self.h, star(), isolated='error')

    def test_pooling_takes_elementwise_max(self):
        result = decode_array(mpc.reconstruct_array(aggregate_pool(self.runtime, self.h, star())))
        np.testing.assert_array_equal(result[0], [4.0, 2.0])
        np.testing.assert_array_equal(result[3], self.plain[0])
        np.testing.assert_array_equal(result[4], [0.0, 0.0])
        np.testing.assert_array_equal(result, decode_array(oracles.fx_pool(encode_array(self.plain), star())))

    def test_loss_is_sum_of_squares(self):
        target = mpc.input_share(self.runtime, 1, encode_array(np.zeros_like(self.plain)))
        loss = decode_array(mpc.reconstruct_array(secure_loss(self.runtime, self.h, target)))
        self.assertAlmostEqual(float(loss[0]), float(np.sum(self.plain ** 2)), places=3)


class GnnTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.session = open_session(fixture_config('companies'))
        cls.store, cls.cfg, cls.x = embed_universe(cls.session.runtime, cls.session.universe, depth=2, dim=4,
                                                   seed=2021)

    def test_layers_and_shapes(self):
        self.assertEqual(len(self.store.layers), 3)
        self.assertEqual(self.store.final.shape, (7, 4))
        self.assertEqual(self.store.row(4).shape, (4,))
        self.assertEqual(self.store.relation_embeddings.shape, (3, 4))
        self.assertEqual(self.x.shape, (7, 2))

    def test_matches_fixed_point_oracle(self):
        universe = self.session.universe
        layers = oracles.universe_gnn(universe, 2, 4, 'mean', 2021, self.cfg.activation, DEFAULT_CONFIG)
        for secure, expected in zip(self.store.layers, layers):
            error = np.max(np.abs(decode_array(mpc.reconstruct_array(secure)) - decode_array(expected)))
            self.assertLessEqual(error, 2.0 ** (6 - DEFAULT_CONFIG.frac_bits))

    def test_close_to_float_reference(self):
        universe = self.session.universe
        x = decode_array(oracles.pooled_properties(universe, DEFAULT_CONFIG))
        weights = [decode_array(oracles.plain_weights(2, 4, 2021, DEFAULT_CONFIG))]
        weights += [decode_array(oracles.plain_weights(8, 4, 2021 + k, DEFAULT_CONFIG)) for k in (1, 2)]
        reference, peak = oracles.float_gnn(x, weights[0], weights[1:], self.cfg.activation,
                                            neighbourhoods(universe), 'mean')
        self.assertLess(peak, 4.0)
        np.testing.assert_allclose(decode_array(mpc.reconstruct_array(self.store.final)), reference, atol=1e-3)

    def test_pooling_forward_pass(self):
        session = open_session(fixture_config('companies'))
        store, cfg, _ = embed_universe(session.runtime, session.universe, depth=1, dim=3, aggregator='pooling',
                                       seed=5)
        layers = oracles.universe_gnn(session.universe, 1, 3, 'pooling', 5, cfg.activation, DEFAULT_CONFIG)
        error = np.max(np.abs(decode_array(mpc.reconstruct_array(store.final)) - decode_array(layers[-1])))
        self.assertLessEqual(error, 2.0 ** (6 - DEFAULT_CONFIG.frac_bits))

    def test_exported_shares_reconstruct(self):
        with tempfile.TemporaryDirectory() as tmp:
            self.store.export_shares(tmp)
            shares = np.zeros((2, 7, 4), dtype=np.uint64)
            for party in (1, 2):
                with open(Path(tmp) / f'embeddings_party{party}.csv', newline='') as handle:
                    for row in list(csv.reader(handle))[1:]:
                        shares[party - 1, self.store.names.index(row[0]), int(row[1])] = int(row[2], 16)
        np.testing.assert_array_equal(shares.sum(axis=0, dtype=np.uint64), mpc.reconstruct_array(self.store.final))

    def test_config_validation(self):
        runtime = build_runtime(2)
        with self.assertRaises(ValueError):
            build_gnn(runtime, 2, 0, 4, 'mean', 1)
        cfg = build_gnn(runtime, 2, 1, 4, 'mean', 1)
        cfg.layer_weights = []
        with self.assertRaises(DimensionMismatch):
            cfg.__post_init__()
