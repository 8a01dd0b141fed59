"""
Round-synchronous message runtime shared by every secure protocol.

Parties are numbered ``1..n``; the dealer is party ``0``. Every value that
crosses a party boundary goes through :meth:`Runtime.post` as bytes, so the
transcript is the complete record of what each party saw.
"""
import hashlib
import json
import logging
from collections import Counter, defaultdict, deque
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .exceptions import Deadlock, InvalidPartyCount, RoundDesync

logger = logging.getLogger(__name__)

DEALER = 0


class Disclosure(str, Enum):
    INPUT = 'input'
    MASKED = 'masked'
    COMPARISON = 'comparison'
    PSI = 'psi'
    DIVISOR = 'divisor'
    OUTPUT = 'output'
    DEALER = 'dealer'


# Kinds a party may legitimately learn in the clear.
PUBLIC_DISCLOSURES = frozenset({
    Disclosure.MASKED, Disclosure.COMPARISON, Disclosure.PSI,
    Disclosure.DIVISOR, Disclosure.OUTPUT,
})


def pack(array):
    return np.ascontiguousarray(array, dtype=np.uint64).astype('<u8').tobytes()


def unpack(payload, shape):
    return np.frombuffer(payload, dtype='<u8').astype(np.uint64).reshape(shape)


@dataclass(frozen=True)
class Message:
    sender: int
    receiver: int
    round: int
    tag: str
    payload: bytes
    disclosure: Disclosure = Disclosure.INPUT

    @property
    def from_dealer(self):
        return self.sender == DEALER

    def as_record(self):
        return {
            'sender': self.sender,
            'receiver': self.receiver,
            'round': self.round,
            'tag': self.tag,
            'disclosure': self.disclosure.value,
            'payload': self.payload.hex(),
        }


@dataclass
class Transcript:
    messages: list = field(default_factory=list)
    declarations: list = field(default_factory=list)
    rounds: int = 0

    def append(self, message):
        self.messages.append(message)

    def absorb(self, other):
        """Append a sub-protocol transcript run on its own scheduler."""
        self.messages.extend(other.messages)
        self.declarations.extend(other.declarations)
        self.rounds += other.rounds

    def declare(self, tag, disclosure, payload=b''):
        """Record a value made public without a message, such as a degree vector."""
        self.declarations.append((tag, disclosure, payload))

    @property
    def party_messages(self):
        return [m for m in self.messages if not m.from_dealer]

    @property
    def dealer_messages(self):
        return [m for m in self.messages if m.from_dealer]

    def sent_by(self, party, tag=None):
        return [m for m in self.messages
                if m.sender == party and (tag is None or m.tag.startswith(tag))]

    def bytes_by_party(self):
        totals = Counter()
        for message in self.messages:
            totals[message.sender] += len(message.payload)
        return dict(totals)

    def disclosures(self):
        kinds = {m.disclosure for m in self.party_messages}
        kinds.update(kind for _, kind, _ in self.declarations)
        return kinds

    def records(self):
        return [m.as_record() for m in self.messages]

    def digest(self):
        sha = hashlib.sha256()
        for record in self.records():
            sha.update(json.dumps(record, sort_keys=True).encode())
        return sha.hexdigest()

    def dump(self, path):
        with open(path, 'w') as handle:
            for record in self.records():
                handle.write(json.dumps(record, sort_keys=True) + '\n')

    def summary(self):
        return {
            'rounds': self.rounds,
            'party_messages': len(self.party_messages),
            'dealer_messages': len(self.dealer_messages),
            'bytes': sum(self.bytes_by_party().values()),
            'digest': self.digest(),
        }


def assert_no_plaintext_leak(transcript, secrets):
    """True when no secret's canonical encoding appears in any payload.

    Ring values are matched by their 8-byte little-endian form; bytes and
    strings are matched as given (UTF-8 for strings).
    """
    encodings = []
    for secret in secrets:
        if isinstance(secret, (bytes, bytearray)):
            encodings.append(bytes(secret))
        elif isinstance(secret, str):
            encodings.append(secret.encode())
        else:
            encodings.append(secret.to_bytes())
    for message in transcript.messages:
        for encoding in encodings:
            if encoding in message.payload:
                return False
    return True


class Runtime:
    """Channels, round counter, transcript and randomness for one protocol run."""

    def __init__(self, parties, config=None, seed=0, dealer=None, debug=False,
                 compare_bits=20, div_iterations=15):
        from .dealer import OnlineDealer
        from .numeric import DEFAULT_CONFIG

        if parties < 2:
            raise InvalidPartyCount(f'Need at least 2 parties, got {parties}.')
        self.parties = parties
        self.config = config or DEFAULT_CONFIG
        self.seed = seed
        self.debug = debug
        self.compare_bits = compare_bits
        self.div_iterations = div_iterations
        seeds = np.random.SeedSequence(seed).spawn(parties + 1)
        self.rngs = {party: np.random.default_rng(s) for party, s in enumerate(seeds)}
        self.dealer = dealer or OnlineDealer(parties, self.rngs[DEALER])
        self.round = 0
        self.transcript = Transcript()
        self._channels = defaultdict(deque)
        self._tags = Counter()

    @property
    def party_ids(self):
        return range(1, self.parties + 1)

    def fresh_tag(self, prefix):
        self._tags[prefix] += 1
        return f'{prefix}#{self._tags[prefix]}'

    def post(self, sender, receiver, tag, payload, disclosure=Disclosure.INPUT):
        message = Message(sender, receiver, self.round, tag, bytes(payload), disclosure)
        self.transcript.append(message)
        self._channels[(sender, receiver)].append(message)
        logger.debug('round %d: %d -> %d %s (%d bytes)',
                     self.round, sender, receiver, tag, len(payload))

    def collect(self, receiver, sender, tag=None):
        channel = self._channels[(sender, receiver)]
        if not channel:
            raise Deadlock(f'Party {receiver} waits on party {sender} with nothing in flight.')
        message = channel.popleft()
        if message.round != self.round or (tag is not None and message.tag != tag):
            raise RoundDesync(
                f'Party {receiver} expected {tag!r} in round {self.round}, '
                f'got {message.tag!r} from round {message.round}.'
            )
        return message.payload

    def barrier(self):
        pending = [key for key, channel in self._channels.items() if channel]
        if pending:
            raise RoundDesync(f'Undelivered messages on channels {pending} at round {self.round}.')
        self.round += 1
        self.transcript.rounds = self.round

    def deliver_material(self, kind, rows, holders=None):
        """Send dealer rows to their holders; returns what each holder received."""
        holders = list(holders or self.party_ids)
        received = []
        for holder, row in zip(holders, rows):
            row = np.asarray(row, dtype=np.uint64)
            self.post(DEALER, holder, f'dealer:{kind}', pack(row), Disclosure.DEALER)
            received.append(unpack(self.collect(holder, DEALER, f'dealer:{kind}'), row.shape))
        return np.stack(received)

    def exchange(self, tag, rows, disclosure, receivers=None):
        """One round: every party sends its row to every receiver; returns the sums."""
        return {receiver: values[0] for receiver, values in
                self.exchange_many(tag, [rows], disclosure, receivers).items()}

    def exchange_many(self, tag, arrays, disclosure, receivers=None):
        """Like :meth:`exchange` for several arrays, one message per array, in one round."""
        arrays = [np.asarray(rows, dtype=np.uint64) for rows in arrays]
        receivers = list(receivers or self.party_ids)
        for sender in self.party_ids:
            for receiver in receivers:
                if sender == receiver:
                    continue
                for index, rows in enumerate(arrays):
                    self.post(sender, receiver, f'{tag}/{index}', pack(rows[sender - 1]), disclosure)
        opened = {}
        for receiver in receivers:
            totals = [rows[receiver - 1].copy() for rows in arrays]
            for sender in self.party_ids:
                if sender == receiver:
                    continue
                for index, rows in enumerate(arrays):
                    payload = self.collect(receiver, sender, f'{tag}/{index}')
                    totals[index] += unpack(payload, rows.shape[1:])
            opened[receiver] = totals
        self.barrier()
        return opened

    def send_pairwise(self, tag, first, second, first_row, second_row, disclosure=Disclosure.MASKED):
        """Post one row in each direction between two parties without closing the round."""
        self.post(first, second, tag, pack(first_row), disclosure)
        self.post(second, first, tag, pack(second_row), disclosure)

    def receive_pairwise(self, tag, first, second, first_shape, second_shape):
        """Collect what :meth:`send_pairwise` posted; returns (seen by first, seen by second)."""
        to_second = unpack(self.collect(second, first, tag), first_shape)
        to_first = unpack(self.collect(first, second, tag), second_shape)
        return to_first, to_second

    def absorb(self, transcript):
        self.transcript.absorb(transcript)
        self.round += transcript.rounds
        self.transcript.rounds = self.round

    def declare_public(self, tag, values, disclosure=Disclosure.DIVISOR):
        self.transcript.declare(tag, disclosure, pack(np.asarray(values, dtype=np.uint64)))


# State-machine driver

@dataclass
class PartyContext:
    party: int
    parties: int
    rng: np.random.Generator
    dealer_port: object = None
    round: int = 0

    def message(self, receiver, tag, payload, disclosure=Disclosure.INPUT):
        return Message(self.party, receiver, self.round, tag, bytes(payload), disclosure)

    def material(self, kind, shape):
        if self.dealer_port is None:
            raise Deadlock(f'Party {self.party} asked for {kind} with no dealer attached.')
        return self.dealer_port.request(self, kind, shape)


class _DealerPort:
    """Issues joint dealer material once and hands each party its row."""

    def __init__(self, dealer, transcript):
        self.dealer = dealer
        self.transcript = transcript
        self._issued = {}
        self._counts = Counter()

    def request(self, ctx, kind, shape):
        shape = tuple(shape)
        key = (kind, shape, self._counts[(ctx.party, kind, shape)])
        self._counts[(ctx.party, kind, shape)] += 1
        if key not in self._issued:
            self._issued[key] = self.dealer.issue(kind, shape)
        parts = tuple(np.asarray(item)[ctx.party - 1] for item in self._issued[key])
        payload = b''.join(pack(part) for part in parts)
        self.transcript.append(
            Message(DEALER, ctx.party, ctx.round, f'dealer:{kind}', payload, Disclosure.DEALER))
        return parts


def run_protocol(machines, dealer=None, seed=0, max_rounds=10_000):
    """
    Drive generator party machines in lock-step.

    ``machines`` maps party id to a callable taking a :class:`PartyContext` and
    returning a generator. Each ``yield`` sends a list of messages for the
    current round and receives the list addressed to that party. Returns
    ``(outputs, transcript)``.
    """
    machines = dict(machines) if isinstance(machines, dict) else dict(enumerate(machines, start=1))
    parties = len(machines)
    if parties < 2:
        raise InvalidPartyCount(f'Need at least 2 parties, got {parties}.')
    transcript = Transcript()
    port = _DealerPort(dealer, transcript) if dealer is not None else None
    seeds = np.random.SeedSequence(seed).spawn(parties + 1)
    contexts = {party: PartyContext(party, parties, np.random.default_rng(seeds[party]), port)
                for party in machines}
    running = {party: machine(contexts[party]) for party, machine in machines.items()}
    outputs = {}
    inboxes = {party: None for party in machines}
    current = 0

    while running:
        if current >= max_rounds:
            raise Deadlock(f'Protocol did not finish within {max_rounds} rounds.')
        outgoing = []
        for party in list(running):
            contexts[party].round = current
            try:
                sent = running[party].send(inboxes[party])
            except StopIteration as stop:
                outputs[party] = stop.value
                del running[party]
                continue
            outgoing.extend(sent or [])
        if running and not outgoing:
            raise Deadlock(f'Every active party is waiting in round {current}.')
        inboxes = {party: [] for party in machines}
        for message in outgoing:
            if message.round != current:
                raise RoundDesync(f'Message {message.tag!r} stamped round {message.round} in round {current}.')
            if message.receiver not in machines:
                raise RoundDesync(f'Message {message.tag!r} addressed to unknown party {message.receiver}.')
            transcript.append(message)
            inboxes[message.receiver].append(message)
        if outgoing:
            current += 1
            transcript.rounds = current
    return outputs, transcript
