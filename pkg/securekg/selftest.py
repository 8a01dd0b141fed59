"""
Acceptance checks: every secure path against its plaintext oracle.

Each check returns a :class:`CheckResult` with the bound it must meet and
the worst value observed. ``quick`` shrinks the sample sizes for CI smoke
runs; the bounds stay the same.
"""
import itertools
import logging
import time
from dataclasses import asdict, dataclass

import numpy as np

from . import mpc, oracles, psi
from .complete import ScorerBank, TripleScorer, rank_candidates, rank_scores, score_candidates
from .embed import aggregate_pool, embed_universe, fit_sigmoid_poly, neighbourhoods
from .exceptions import SecureKgError
from .fixtures import fixture_config, random_party_graphs, random_program
from .kgstore import PlainCell, PropertySlot, RelationDictionary, SlotKind
from .merge import MergePolicy, encode_for_merge, merge_kgs, merge_properties
from .numeric import DEFAULT_CONFIG, RING_MASK, RingValue, decode_array, encode_array
from .pipeline import build_runtime, open_session
from .query import closes_loop, run_query
from .runtime import DEALER, Disclosure, assert_no_plaintext_leak

logger = logging.getLogger(__name__)


@dataclass
class CheckResult:
    name: str
    bound: float
    observed: float
    passed: bool
    seconds: float = 0.0
    detail: str = ''
    budget: float = None

    def as_dict(self):
        return asdict(self)


@dataclass
class CheckContext:
    seed: int = 2021
    quick: bool = False
    dealer_file: object = None
    record_dealer: object = None
    config: object = DEFAULT_CONFIG

    def size(self, full, quick):
        return quick if self.quick else full

    def rng(self, offset=0):
        return np.random.default_rng(self.seed + offset)


def _opened(values, config):
    return decode_array(mpc.reconstruct_array(values), config)


# Individual checks

def check_sharing(ctx):
    rng = ctx.rng(1)
    count = ctx.size(100_000, 10_000)
    values = rng.integers(0, RING_MASK, size=count, dtype=np.uint64, endpoint=True)
    values = np.concatenate([values, np.array([0, 1, 2 ** 63 - 1, 2 ** 63, RING_MASK], dtype=np.uint64)])
    bad = 0
    for parties in (2, 3, 5):
        bad += int(np.count_nonzero(mpc.reconstruct_array(mpc.share_array(values, parties, rng)) != values))
    for raw in (0, 1, RING_MASK, 2 ** 63):
        if mpc.reconstruct(mpc.share(RingValue(raw), 3, rng)).raw != raw:
            bad += 1
    return 0.0, float(bad), bad == 0, f'{values.size} values over 2, 3 and 5 parties'


def check_mul(ctx):
    rng = ctx.rng(2)
    count = ctx.size(10_000, 1_000)
    runtime = build_runtime(2, ctx.config, ctx.seed, dealer_file=ctx.dealer_file,
                            record=ctx.record_dealer is not None)
    raw_a = encode_array(rng.uniform(-256, 256, count), ctx.config)
    raw_b = encode_array(rng.uniform(-256, 256, count), ctx.config)
    a = mpc.input_share(runtime, 1, raw_a)
    b = mpc.input_share(runtime, 2, raw_b)
    before = runtime.dealer.issued['triple']
    product = mpc.mul(runtime, a, b)
    used = runtime.dealer.issued['triple'] - before
    if ctx.record_dealer is not None:
        runtime.dealer.save(ctx.record_dealer)
    exact = decode_array(raw_a, ctx.config) * decode_array(raw_b, ctx.config)
    error = float(np.max(np.abs(_opened(product, ctx.config) - exact)))
    bound = 2.0 ** (1 - ctx.config.frac_bits)
    return bound, error, error <= bound and used == count, f'{used} triples for {count} products'


def check_div(ctx):
    rng = ctx.rng(3)
    count = ctx.size(10_000, 1_000)
    exponent = 4
    runtime = build_runtime(2, ctx.config, ctx.seed)
    raw_a = encode_array(rng.uniform(-100, 100, count), ctx.config)
    raw_b = encode_array(rng.uniform(2 ** (exponent - 1), 2 ** exponent - 0.01, count), ctx.config)
    quotient = mpc.div(runtime, mpc.input_share(runtime, 1, raw_a), mpc.input_share(runtime, 2, raw_b), exponent)
    exact = decode_array(raw_a, ctx.config) / decode_array(raw_b, ctx.config)
    error = float(np.max(np.abs(_opened(quotient, ctx.config) - exact) / np.maximum(1.0, np.abs(exact))))
    bound = 2.0 ** -14
    return bound, error, error <= bound, f'{count} quotients, b in [{2 ** (exponent - 1)}, {2 ** exponent})'


def _argmax_mismatches(runtime, grid, config):
    shared = mpc.input_share(runtime, 1, encode_array(grid, config))
    index, best = mpc.argmax(runtime, shared)
    wrong_index = np.count_nonzero(np.asarray(index) != np.argmax(grid, axis=-1))
    wrong_value = np.count_nonzero(_opened(best, config).reshape(-1) != grid.max(axis=-1).reshape(-1))
    return int(wrong_index + wrong_value)


def check_argmax(ctx):
    runtime = build_runtime(2, ctx.config, ctx.seed)
    bad = 0
    for length in range(1, 5):
        grid = np.array(list(itertools.product(range(-2, 3), repeat=length)), dtype=np.float64)
        bad += _argmax_mismatches(runtime, grid, ctx.config)
    count = ctx.size(1_000, 100)
    grid = ctx.rng(4).integers(-50, 51, size=(count, 64)).astype(np.float64)
    bad += _argmax_mismatches(runtime, grid, ctx.config)
    return 0.0, float(bad), bad == 0, f'exhaustive lengths 1-4 plus {count} random length-64 vectors'


def check_property_merge(ctx):
    runtime = build_runtime(2, ctx.config, ctx.seed)
    ages = (PropertySlot('age'),)
    rows = [mpc.input_share(runtime, party, encode_for_merge([PlainCell(value)], ages, ctx.config))
            for party, value in ((1, 23.0), (2, 15.0))]
    average = float(_opened(merge_properties(runtime, rows, ages, MergePolicy()), ctx.config)[0])

    runtime = build_runtime(3, ctx.config, ctx.seed)
    genders = (PropertySlot('gender', SlotKind.CATEGORICAL, ('M', 'F')),)
    rows = [mpc.input_share(runtime, party, encode_for_merge([PlainCell(value)], genders, ctx.config))
            for party, value in ((1, 'M'), (2, 'F'), (3, 'F'))]
    index = int(_opened(merge_properties(runtime, rows, genders, MergePolicy()), ctx.config)[0])
    majority = genders[0].categories[index]
    observed = abs(average - 19.0) + (0.0 if majority == 'F' else 1.0)
    return 0.0, observed, observed == 0.0, f'average(23, 15) = {average}, majority(M, F, F) = {majority}'


def check_psi(ctx):
    rng = ctx.rng(6)
    trials = ctx.size(1_000, 30)
    wrong = leaks = 0
    for trial in range(trials):
        pool = [f'key-{v}' for v in rng.permutation(400)]
        left = set(pool[:int(rng.integers(0, 201))])
        right = set(pool[int(rng.integers(0, 200)):][:int(rng.integers(0, 201))])
        common, transcript = psi.intersect(left, right, seed=ctx.seed + trial)
        wrong += common != (left & right)
        leaks += not assert_no_plaintext_leak(transcript, sorted(left | right))
    return 0.0, float(wrong + leaks), wrong + leaks == 0, f'{trials} instances, {wrong} wrong, {leaks} leaking'


def check_fixture_merge(ctx):
    first = open_session(fixture_config('companies'), seed=ctx.seed)
    second = open_session(fixture_config('companies'), seed=ctx.seed)
    universe = first.universe
    jb = universe.entity_id('Jim Butler')
    row = _opened(universe.shared_row(jb), first.runtime.config)
    error = float(np.max(np.abs(row - np.array([0.8, 1.0]))))
    same = (first.runtime.transcript.digest() == second.runtime.transcript.digest()
            and np.array_equal(universe.shared_row(jb).shares, second.universe.shared_row(jb).shares))
    structure = universe.size == 7 and [universe.names[g] for g in universe.common_entities()] == ['Jim Butler']
    bound = 2.0 ** (1 - first.runtime.config.frac_bits)
    return bound, error, error <= bound and same and structure, (
        f'{universe.size} entities, common {universe.report()["common"]}, deterministic={same}')


def check_query(ctx):
    rng = ctx.rng(8)
    trials = ctx.size(100, 10)
    wrong = 0
    for trial in range(trials):
        graphs = random_party_graphs(rng, int(rng.integers(5, 51)))
        runtime = build_runtime(2, ctx.config, ctx.seed + trial)
        universe = merge_kgs(runtime, graphs, MergePolicy(), relations=RelationDictionary(), link=False)
        program = random_program(rng, universe.names)
        secure = run_query(runtime, program, universe)
        plain = oracles.plain_query(program, universe, ctx.config)
        if secure != plain:
            wrong += 1
            logger.warning('Query mismatch on %r: %s vs %s', program, sorted(secure), sorted(plain))
    return 0.0, float(wrong), wrong == 0, f'{trials} random universes'


def check_gnn(ctx):
    session = open_session(fixture_config('companies'), seed=ctx.seed)
    runtime, universe = session.runtime, session.universe
    config = runtime.config
    depth, dim = 2, 4
    store, gnn, _ = embed_universe(runtime, universe, depth, dim, 'mean', ctx.seed)
    secure = _opened(store.final, config)
    layers = oracles.universe_gnn(universe, depth, dim, 'mean', ctx.seed, gnn.activation, config)
    error = float(np.max(np.abs(secure - decode_array(layers[-1], config))))

    x = decode_array(oracles.pooled_properties(universe, config), config)
    weights = [decode_array(oracles.plain_weights(x.shape[1], dim, ctx.seed, config), config)]
    weights += [decode_array(oracles.plain_weights(2 * dim, dim, ctx.seed + k, config), config)
                for k in range(1, depth + 1)]
    reference, peak = oracles.float_gnn(x, weights[0], weights[1:], gnn.activation, neighbourhoods(universe), 'mean')
    float_error = float(np.max(np.abs(secure - reference)))
    float_ok = peak > 4 or float_error <= 0.07

    grid = np.array(list(itertools.product(range(-2, 3), repeat=3)), dtype=np.float64)
    pool_runtime = build_runtime(2, config, ctx.seed)
    star = [np.zeros((4, 4), dtype=np.int64) for _ in range(2)]
    star[0][0, 1] = star[0][0, 2] = star[1][0, 3] = 1
    star_h = mpc.input_share(pool_runtime, 2, encode_array(
        np.stack([np.zeros(grid.shape[0]), grid[:, 0], grid[:, 1], grid[:, 2]]), config))
    pool_wrong = int(np.count_nonzero(
        _opened(aggregate_pool(pool_runtime, star_h, star), config)[0] != grid.max(axis=1)))
    pool_wrong += _argmax_mismatches(pool_runtime, grid, config)

    bound = 2.0 ** (-config.frac_bits + 6)
    return bound, error, error <= bound and float_ok and pool_wrong == 0, (
        f'float reference error {float_error:.2e} (peak |z| {peak:.2f}), pooling mismatches {pool_wrong}')


def check_completion(ctx):
    rng = ctx.rng(10)
    count = ctx.size(1_000, 100)
    dim = 8
    runtime = build_runtime(2, ctx.config, ctx.seed)
    config = runtime.config
    activation = fit_sigmoid_poly()
    raw_head = encode_array(rng.uniform(-1, 1, dim), config)
    raw_tails = encode_array(rng.uniform(-1, 1, (count, dim)), config)
    raw_weight = encode_array(rng.uniform(-0.5, 0.5, (dim, 1)), config)
    scorer = TripleScorer(mpc.input_share(runtime, 1, raw_weight), activation)
    scores = score_candidates(runtime, mpc.input_share(runtime, 1, raw_head),
                              mpc.input_share(runtime, 2, raw_tails), scorer)
    expected = decode_array(oracles.fx_scores(raw_head, raw_tails, raw_weight, activation, config), config)
    error = float(np.max(np.abs(_opened(scores, config) - expected)))

    sample = scores[0:6]
    ranking = rank_scores(runtime, sample)
    ordered = ranking.order == oracles.plain_rank(_opened(sample, config))
    bound = 2.0 ** (-config.frac_bits + 5)
    return bound, error, error <= bound and ordered, f'{count} scores, rank order matches={ordered}'


def check_guarantee_loop(ctx):
    session = open_session(fixture_config('guarantee'), seed=ctx.seed)
    universe = session.universe
    relation = universe.relations.resolve('guarantees')
    borrower, guarantor = universe.entity_id('E1'), universe.entity_id('E3')
    merged = closes_loop(session.runtime, universe, 'E3', 'E1', 'guarantees', depth=3)
    merged_oracle = oracles.plain_reachable(oracles.union_adjacency(universe, relation), borrower, guarantor, 3)
    # the path is split across the banks, so neither sees it alone
    single = any(oracles.plain_reachable(universe.adjacency(bank, relation), borrower, guarantor, 3)
                 for bank in (1, 2))
    empty = oracles.plain_reachable(np.zeros((universe.size, universe.size), dtype=np.int64),
                                    borrower, guarantor, 3)
    wrong = int(merged != merged_oracle) + int(not merged) + int(single) + int(empty)
    verdicts = f'merged {"REJECT" if merged else "ALLOW"}, single {"REJECT" if single else "ALLOW"}'
    return 0.0, float(wrong), wrong == 0, verdicts


# Leakage audit

OUTPUT_TAGS = frozenset({'query-result', 'link-winner', 'scores', 'embeddings', 'property'})
INPUT_TAGS = frozenset({'input', 'weights', 'features', 'merge-row', 'properties'})
TRUNCATION_TAGS = frozenset({'trunc', 'scale', 'mean-scale'})
PSI_TAGS = frozenset({'psi-masked', 'psi-double'})
DECLARED = frozenset({('degree', Disclosure.DIVISOR)})


def opening_allowed(message):
    base = message.tag.split('#')[0]
    last = message.tag.rsplit('/', 1)[-1]
    kind = message.disclosure
    if kind == Disclosure.DEALER:
        return message.sender == DEALER and message.tag.startswith('dealer:')
    if message.sender == DEALER:
        return False
    if kind == Disclosure.INPUT:
        return base in INPUT_TAGS
    if kind == Disclosure.PSI:
        return base in PSI_TAGS
    if kind == Disclosure.MASKED:
        return base in TRUNCATION_TAGS or base.endswith('-open') or last in ('e', 'd')
    if kind == Disclosure.COMPARISON:
        return base.endswith('-sign')
    if kind == Disclosure.OUTPUT:
        return base in OUTPUT_TAGS
    return False


def audit_transcript(transcript):
    """Messages and declarations outside the documented public values."""
    violations = [f'{m.sender}->{m.receiver} {m.tag} ({m.disclosure.value})'
                  for m in transcript.messages if not opening_allowed(m)]
    violations += [f'declared {tag} ({kind.value})' for tag, kind, _ in transcript.declarations
                   if (tag, kind) not in DECLARED]
    return violations


def check_leakage(ctx):
    session = open_session(fixture_config('companies'), seed=ctx.seed)
    runtime, universe = session.runtime, session.universe
    run_query(runtime, 'start Alice; out 2; out 1', universe)
    run_query(runtime, 'start *; where score >= 0.5', universe)
    store, _, _ = embed_universe(runtime, universe, 2, 4, 'mean', ctx.seed)
    mpc.open_values(runtime, store.final, 'embeddings')
    scorer = ScorerBank(runtime, 4, ctx.seed).for_relation(1)
    head = universe.entity_id('Alice')
    rank_candidates(runtime, store, head, [g for g in range(universe.size) if g != head], scorer,
                    topk=3, open_scores=True)
    violations = audit_transcript(runtime.transcript)
    for line in violations[:10]:
        logger.warning('Unexpected opening: %s', line)
    kinds = sorted(kind.value for kind in runtime.transcript.disclosures())
    return 0.0, float(len(violations)), not violations, f'disclosure kinds seen: {", ".join(kinds)}'


CHECKS = {
    'sharing': check_sharing,
    'mul': check_mul,
    'div': check_div,
    'argmax': check_argmax,
    'property-merge': check_property_merge,
    'psi': check_psi,
    'fixture-merge': check_fixture_merge,
    'query': check_query,
    'gnn': check_gnn,
    'completion': check_completion,
    'guarantee-loop': check_guarantee_loop,
    'leakage': check_leakage,
}

# wall-clock seconds per full-size check; overruns are logged, not failed
TIME_BUDGETS = {
    'sharing': 5.0,
    'mul': 10.0,
    'div': 10.0,
    'argmax': 10.0,
    'property-merge': 1.0,
    'psi': 30.0,
    'fixture-merge': 5.0,
    'query': 60.0,
    'gnn': 30.0,
    'completion': 20.0,
    'guarantee-loop': 5.0,
}


def run_check(name, ctx):
    started = time.perf_counter()
    try:
        bound, observed, passed, detail = CHECKS[name](ctx)
    except SecureKgError as exc:
        bound, observed, passed, detail = None, None, False, f'{type(exc).__name__}: {exc}'
    elapsed = time.perf_counter() - started
    budget = TIME_BUDGETS.get(name)
    result = CheckResult(name, bound, observed, bool(passed), round(elapsed, 3), detail, budget)
    logger.info('Check %s %s in %.2fs', name, 'passed' if result.passed else 'FAILED', result.seconds)
    if budget is not None and elapsed > budget:
        logger.warning('Check %s took %.2fs, over its %.0fs budget', name, elapsed, budget)
    return result


def run_selftest(only=None, **options):
    ctx = CheckContext(**options)
    names = list(only) if only else list(CHECKS)
    unknown = [name for name in names if name not in CHECKS]
    if unknown:
        raise ValueError(f'Unknown checks {unknown}; choose from {list(CHECKS)}.')
    return [run_check(name, ctx) for name in names]
