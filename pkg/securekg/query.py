"""
Secure graph traversal over a merged universe.

A program is a list of instructions (``start``, ``out``, ``in``, ``where``).
The traverser keeps the current location set as a shared 0/1 vector; each
instruction yields a new indicator and only the final one is opened.
"""
import logging
import re
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import mpc
from .exceptions import BadSlot, ParseError, SecureKgError
from .numeric import decode_array, encode, encode_array

logger = logging.getLogger(__name__)


class Op(str, Enum):
    START = 'start'
    OUT = 'out'
    IN = 'in'
    WHERE = 'where'


COMPARATORS = {'>=': '>=', '<': '<', '=': '=', '==': '='}


@dataclass(frozen=True)
class Instruction:
    op: Op
    target: str = None
    relation: str = None
    slot: str = None
    cmp: str = None
    value: str = None

    def __str__(self):
        if self.op == Op.START:
            return f'start {self.target}'
        if self.op == Op.WHERE:
            return f'where {self.slot} {self.cmp} {self.value}'
        return f'{self.op.value} {self.relation}'


_WHERE = re.compile(r'^where\s+(\S+)\s*(>=|==|=|<)\s*(.+)$', re.IGNORECASE)


def parse_program(text):
    """Parse ``start Alice; out 2; where score >= 0.5`` into instructions."""
    program = []
    pieces = [p.strip() for p in re.split(r'[;\n]', text)]
    for number, piece in enumerate(pieces, start=1):
        if not piece:
            continue
        words = piece.split(None, 1)
        op = words[0].lower()
        if op == Op.START.value and len(words) == 2:
            program.append(Instruction(Op.START, target=words[1].strip().strip('"\'')))
        elif op in (Op.OUT.value, Op.IN.value) and len(words) == 2:
            program.append(Instruction(Op(op), relation=words[1].strip()))
        elif op == Op.WHERE.value and (match := _WHERE.match(piece)):
            slot, cmp, value = match.groups()
            program.append(Instruction(Op.WHERE, slot=slot, cmp=COMPARATORS[cmp], value=value.strip().strip('"\'')))
        else:
            raise ParseError(f'cannot parse instruction {piece!r}', line=number)
    starts = [i for i, ins in enumerate(program) if ins.op == Op.START]
    if starts != [0]:
        raise ParseError('a program begins with exactly one start instruction')
    return program


@dataclass
class Traverser:
    locations: mpc.ShareVector = None
    program: list = field(default_factory=list)


def resolve_slot(universe, token):
    schema = universe.schema
    if token.isdigit():
        index = int(token) - 1
        if 0 <= index < len(schema):
            return index, schema[index]
    for index, slot in enumerate(schema):
        if slot.name == token:
            return index, slot
    raise BadSlot(f'No property slot {token!r}.')


def slot_constant(slot, text):
    if slot.is_categorical:
        if text in slot.categories:
            return float(slot.category_index(text))
        raise BadSlot(f'{text!r} is not a category of {slot.name!r}.')
    try:
        return float(text)
    except ValueError:
        raise BadSlot(f'{text!r} is not a number for slot {slot.name!r}.') from None


def _indicator(runtime, bits):
    return mpc.public_to_shared(runtime, encode_array(np.asarray(bits, dtype=np.float64), runtime.config))


def sexecute(runtime, traverser, instruction, universe):
    """Evaluate one instruction into a shared indicator over the universe."""
    config = runtime.config
    size = universe.size

    if instruction.op == Op.START:
        if instruction.target == '*':
            return _indicator(runtime, np.ones(size))
        bits = np.zeros(size)
        bits[universe.entity_id(instruction.target)] = 1.0
        return _indicator(runtime, bits)

    locations = traverser.locations
    if instruction.op in (Op.OUT, Op.IN):
        relation = universe.relations.resolve(instruction.relation)
        counts = mpc.zeros(runtime, (size,))
        for party in range(1, universe.parties + 1):
            edges = universe.adjacency(party, relation)
            local = edges.T if instruction.op == Op.OUT else edges
            counts = counts + mpc.private_matmul(runtime, party, local, locations, tag='step')
        bits = mpc.compare_public(runtime, counts, np.uint64(encode(1.0, config).raw), tag='collapse')
        return _indicator(runtime, bits)

    index, slot = resolve_slot(universe, instruction.slot)
    constant = slot_constant(slot, instruction.value)
    column = universe.property_column(runtime, index)
    threshold = mpc.public_to_shared(runtime, encode_array(np.full(size, constant), config))
    at_least = mpc.secure_compare(runtime, column, threshold, tag='where')
    if instruction.cmp == '>=':
        bits = at_least
    elif instruction.cmp == '<':
        bits = ~at_least
    else:
        bits = at_least & mpc.secure_compare(runtime, threshold, column, tag='where')
    return mpc.mul_int(locations, bits.astype(np.int64))


def filter_locations(indicator):
    """The next location set is the indicator itself (positional universe)."""
    return indicator.copy()


def _check_closure(runtime, locations):
    decoded = decode_array(mpc.reconstruct_array(locations), runtime.config)
    if not np.all((decoded == 0.0) | (decoded == 1.0)):
        raise SecureKgError('Location vector left {0, 1}.')


def run_query(runtime, program, universe):
    """Run a program and reconstruct only the final location set."""
    if isinstance(program, str):
        program = parse_program(program)
    traverser = Traverser(program=list(program))
    while traverser.program:
        instruction = traverser.program.pop(0)
        traverser.locations = filter_locations(sexecute(runtime, traverser, instruction, universe))
        logger.debug('Evaluated %s', instruction)
        if runtime.debug:
            _check_closure(runtime, traverser.locations)
    opened = decode_array(mpc.open_values(runtime, traverser.locations, 'query-result'), runtime.config)
    result = {universe.names[gid] for gid in np.flatnonzero(opened >= 0.5)}
    logger.info('Query of %d instructions matched %d entities', len(program), len(result))
    return result


def closes_loop(runtime, universe, guarantor, borrower, relation, depth=3):
    """
    Would a new edge guarantor -> borrower close a cycle of ``relation``?

    It does when the guarantor is reachable from the borrower in 1..depth
    steps. One query per depth; each opens only its own result set.
    """
    target = universe.names[universe.entity_id(guarantor)]
    for hops in range(1, depth + 1):
        program = '; '.join([f'start {borrower}'] + [f'out {relation}'] * hops)
        if target in run_query(runtime, program, universe):
            logger.info('%s reaches %s in %d hops', borrower, guarantor, hops)
            return True
    return False
