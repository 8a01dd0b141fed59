"""
Shared plumbing for the management commands: runtime construction, loading
the parties' graphs and merging them.
"""
import logging
from dataclasses import dataclass

from .conf import load_run_config, secure_kg_setting
from .dealer import FileDealer, OnlineDealer
from .kgstore import RelationDictionary, load_kg
from .merge import MergePolicy, merge_kgs
from .runtime import DEALER, Runtime

logger = logging.getLogger(__name__)


def build_runtime(parties, fixed_point=None, seed=0, debug=False, dealer_file=None, record=False):
    runtime = Runtime(
        parties,
        config=fixed_point,
        seed=seed,
        debug=debug,
        compare_bits=secure_kg_setting('COMPARE_MASK_BITS'),
        div_iterations=secure_kg_setting('DIV_ITERATIONS'),
    )
    if dealer_file is not None:
        runtime.dealer = FileDealer(dealer_file, parties)
    elif record:
        runtime.dealer = OnlineDealer(parties, runtime.rngs[DEALER], record=True)
    return runtime


def load_graphs(run_config):
    relations = RelationDictionary(run_config.relations)
    graphs = [
        load_kg(source.triples, source.properties, run_config.schema, party=party,
                keys_path=source.keys, relations=relations)
        for party, source in enumerate(run_config.parties, start=1)
    ]
    return graphs, relations


@dataclass
class Session:
    config: object
    runtime: Runtime
    graphs: list
    universe: object


def open_session(config_path, seed=None, debug=False, dealer_file=None):
    """Load a run config, its graphs and merge them on a fresh runtime."""
    run_config = load_run_config(config_path, seed=seed)
    dealer_file = dealer_file or (run_config.dealer_file if run_config.dealer == 'file' else None)
    runtime = build_runtime(run_config.party_count, run_config.fixed_point, run_config.seed,
                            debug=debug, dealer_file=dealer_file)
    graphs, relations = load_graphs(run_config)
    universe = merge_kgs(
        runtime, graphs, MergePolicy.from_config(run_config.policy),
        threshold=run_config.link_threshold, feature_dim=run_config.feature_dim,
        psi_group=run_config.psi_group, relations=relations,
    )
    logger.info('Session ready: %d parties, %d entities, seed %d',
                run_config.party_count, universe.size, run_config.seed)
    return Session(run_config, runtime, graphs, universe)
