import json
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from securekg import mpc
from securekg.dealer import FileDealer, OnlineDealer
from securekg.exceptions import Deadlock, ParseError, RoundDesync, TripleExhausted
from securekg.numeric import RingValue, encode_array
from securekg.runtime import Disclosure, Runtime, assert_no_plaintext_leak, run_protocol


def ping_pong(peer, value):
    def machine(ctx):
        inbox = yield [ctx.message(peer, 'ping', bytes([value]))]
        inbox = yield [ctx.message(peer, 'pong', inbox[0].payload * 2)]
        return inbox[0].payload

    return machine


class RuntimeTests(SimpleTestCase):
    def test_barrier_advances_rounds(self):
        runtime = Runtime(2)
        runtime.post(1, 2, 'hello', b'\x01')
        self.assertEqual(runtime.collect(2, 1, 'hello'), b'\x01')
        runtime.barrier()
        self.assertEqual(runtime.round, 1)
        self.assertEqual(runtime.transcript.rounds, 1)

    def test_waiting_on_an_empty_channel_deadlocks(self):
        with self.assertRaises(Deadlock):
            Runtime(2).collect(1, 2)

    def test_undelivered_messages_block_the_round(self):
        runtime = Runtime(2)
        runtime.post(1, 2, 'hello', b'\x01')
        with self.assertRaises(RoundDesync):
            runtime.barrier()

    def test_wrong_tag_is_a_desync(self):
        runtime = Runtime(2)
        runtime.post(1, 2, 'hello', b'\x01')
        with self.assertRaises(RoundDesync):
            runtime.collect(2, 1, 'other')

    def test_transcript_summary_and_dump(self):
        runtime = Runtime(2, seed=4)
        values = mpc.input_share(runtime, 1, encode_array([1.0, 2.0]))
        mpc.open_values(runtime, values)
        summary = runtime.transcript.summary()
        self.assertEqual(summary['rounds'], 2)
        self.assertEqual(summary['party_messages'], 3)
        self.assertEqual(summary['bytes'], 3 * 16)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'transcript.jsonl'
            runtime.transcript.dump(path)
            records = [json.loads(line) for line in path.read_text().splitlines()]
        self.assertEqual(len(records), 3)
        self.assertEqual(records[-1]['disclosure'], Disclosure.OUTPUT.value)

    def test_same_seed_same_digest(self):
        digests = []
        for _ in range(2):
            runtime = Runtime(3, seed=21)
            values = mpc.input_share(runtime, 2, encode_array([0.25, -1.0]))
            mpc.mul(runtime, values, values)
            digests.append(runtime.transcript.digest())
        self.assertEqual(digests[0], digests[1])

    def test_plaintext_leak_detection(self):
        runtime = Runtime(2)
        runtime.post(1, 2, 'x', RingValue(42).to_bytes() + b'tail')
        runtime.collect(2, 1, 'x')
        self.assertFalse(assert_no_plaintext_leak(runtime.transcript, [RingValue(42)]))
        self.assertFalse(assert_no_plaintext_leak(runtime.transcript, ['tail']))
        self.assertTrue(assert_no_plaintext_leak(runtime.transcript, [RingValue(43), b'absent']))


class StateMachineTests(SimpleTestCase):
    def test_lock_step_protocol(self):
        outputs, transcript = run_protocol({1: ping_pong(2, 3), 2: ping_pong(1, 5)})
        self.assertEqual(outputs, {1: bytes([3, 3]), 2: bytes([5, 5])})
        self.assertEqual(transcript.rounds, 2)
        self.assertEqual(len(transcript.messages), 4)

    def test_everyone_waiting_is_a_deadlock(self):
        def silent(ctx):
            yield []

        with self.assertRaises(Deadlock):
            run_protocol({1: silent, 2: silent})


class DealerTests(SimpleTestCase):
    def test_recorded_material_replays_exactly(self):
        dealer = OnlineDealer(2, np.random.default_rng(1), record=True)
        issued = [
            dealer.triples((3,)),
            (dealer.compare_masks((2,)),),
            dealer.truncation_pairs((2,), 16),
            dealer.matrix_triple((2, 3), (3, 1)),
        ]
        with tempfile.TemporaryDirectory() as tmp:
            dealer.save(tmp)
            replay = FileDealer(tmp, 2)
            replayed = [
                replay.triples((3,)),
                (replay.compare_masks((2,)),),
                replay.truncation_pairs((2,), 16),
                replay.matrix_triple((2, 3), (3, 1)),
            ]
        for original, again in zip(issued, replayed):
            for left, right in zip(original, again):
                np.testing.assert_array_equal(left, right)

    def test_triples_are_correlated(self):
        a, b, c = OnlineDealer(3, np.random.default_rng(2)).triples((5,))
        np.testing.assert_array_equal(c.sum(axis=0, dtype=np.uint64),
                                      a.sum(axis=0, dtype=np.uint64) * b.sum(axis=0, dtype=np.uint64))

    def test_triple_budget(self):
        dealer = OnlineDealer(2, limit=3)
        with self.assertRaises(TripleExhausted):
            dealer.triples((4,))

    def test_replay_failures(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(TripleExhausted):
                FileDealer(tmp, 2)
            dealer = OnlineDealer(2, np.random.default_rng(3), record=True)
            dealer.triples((1,))
            dealer.save(tmp)
            with self.assertRaises(ParseError):
                FileDealer(tmp, 2).compare_masks((1,))
            replay = FileDealer(tmp, 2)
            replay.triples((1,))
            with self.assertRaises(TripleExhausted):
                replay.triples((1,))

    def test_runtime_uses_replayed_dealer(self):
        with tempfile.TemporaryDirectory() as tmp:
            recording = Runtime(2, seed=5)
            recording.dealer = OnlineDealer(2, np.random.default_rng(5), record=True)
            a = mpc.input_share(recording, 1, encode_array([1.5, -2.0]))
            first = mpc.reconstruct_array(mpc.mul(recording, a, a))
            recording.dealer.save(tmp)

            replaying = Runtime(2, seed=5)
            replaying.dealer = FileDealer(tmp, 2)
            a = mpc.input_share(replaying, 1, encode_array([1.5, -2.0]))
            second = mpc.reconstruct_array(mpc.mul(replaying, a, a))
        np.testing.assert_array_equal(first, second)
        self.assertEqual(recording.transcript.digest(), replaying.transcript.digest())
