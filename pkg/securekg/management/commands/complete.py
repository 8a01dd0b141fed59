import csv
import io

import numpy as np

from ... import mpc
from ...complete import ScorerBank, build_property_head, complete_property, rank_candidates
from ...embed import embed_universe
from ...exceptions import AcceptanceFailure, EmptyCandidates
from ...numeric import decode_array
from ...oracles import fx_property, fx_scores, plain_rank
from ..base import SecureKgCommand


class Command(SecureKgCommand):
    help = 'Predict properties or rank candidate tails from secure embeddings.'
    command_name = 'complete'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--task', choices=['property', 'triple'], required=True)
        parser.add_argument('--entity', required=True)
        parser.add_argument('--relation', help='Relation name or id (triple task).')
        parser.add_argument('--topk', type=int, default=3)
        parser.add_argument('--open-scores', action='store_true', help='Also open the ranked scores.')
        parser.add_argument('--depth', type=int, default=2)
        parser.add_argument('--dim', type=int, default=4)
        parser.add_argument('--out', help='Write the CSV here as well as to stdout.')

    def _emit(self, rows, options):
        buffer = io.StringIO()
        csv.writer(buffer, lineterminator='\n').writerows(rows)
        self.stdout.write(buffer.getvalue().rstrip('\n'))
        if options.get('out'):
            with open(options['out'], 'w', newline='', encoding='utf-8') as handle:
                handle.write(buffer.getvalue())

    def run(self, options):
        session = self.open_session(options)
        runtime, universe = session.runtime, session.universe
        config = runtime.config
        gid = universe.entity_id(options['entity'])
        store, gnn, _ = embed_universe(runtime, universe, options['depth'], options['dim'], 'mean', runtime.seed)

        if options['task'] == 'property':
            head = build_property_head(runtime, options['dim'], len(universe.schema), runtime.seed, gnn.activation)
            predicted = complete_property(runtime, store.row(gid), head)
            values = decode_array(mpc.open_values(runtime, predicted, 'property'), config)
            self._emit([['slot', 'value']] + [[slot.name, f'{v:.6f}'] for slot, v in zip(universe.schema, values)],
                       options)
            if options['oracle']:
                h = mpc.reconstruct_array(store.row(gid))
                expected = decode_array(fx_property(h, mpc.reconstruct_array(head.weight), head.activation, config),
                                        config).reshape(-1)
                error = float(np.max(np.abs(values - expected)))
                if error > 2.0 ** (5 - config.frac_bits):
                    raise AcceptanceFailure(f'property error {error:.3e}')
                self.stdout.write(self.style.SUCCESS(f'Oracle: max error {error:.3e}.'))
            return runtime, {'task': 'property', 'entity': universe.names[gid], 'values': values.tolist()}

        if not options.get('relation'):
            raise EmptyCandidates('The triple task needs --relation.')
        relation = universe.relations.resolve(options['relation'])
        scorer = ScorerBank(runtime, options['dim'], runtime.seed, gnn.activation).for_relation(relation)
        candidates = [g for g in range(universe.size) if g != gid]
        ranking = rank_candidates(runtime, store, gid, candidates, scorer, options['topk'], options['open_scores'])

        header = ['candidate', 'rank'] + (['score'] if ranking.scores is not None else [])
        rows = []
        for rank, candidate in enumerate(ranking.order, start=1):
            row = [universe.names[candidate], rank]
            if ranking.scores is not None:
                row.append(f'{ranking.scores[rank - 1]:.6f}')
            rows.append(row)
        self._emit([header] + rows, options)

        if options['oracle']:
            embeddings = mpc.reconstruct_array(store.final)
            scores = decode_array(fx_scores(embeddings[gid], embeddings[candidates],
                                            mpc.reconstruct_array(scorer.weight), scorer.activation, config), config)
            expected = [candidates[i] for i in plain_rank(scores, len(ranking.order))]
            # picks may swap only where oracle scores are within tolerance
            tolerance = 2.0 ** (5 - config.frac_bits)
            by_gid = dict(zip(candidates, scores))
            remaining = set(candidates)
            for pick in ranking.order:
                if by_gid[pick] < max(by_gid[g] for g in remaining) - tolerance:
                    names = [universe.names[g] for g in expected]
                    raise AcceptanceFailure(f'plaintext ranking {names} differs')
                remaining.discard(pick)
            self.stdout.write(self.style.SUCCESS('Oracle: ranking matches the plaintext sort.'))
        return runtime, {'task': 'triple', 'entity': universe.names[gid],
                         'ranking': [universe.names[g] for g in ranking.order]}
