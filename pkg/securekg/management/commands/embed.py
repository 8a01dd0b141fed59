import csv

import numpy as np

from ... import mpc
from ...embed import embed_universe
from ...exceptions import AcceptanceFailure
from ...numeric import decode_array
from ...oracles import universe_gnn
from ..base import SecureKgCommand


class Command(SecureKgCommand):
    help = 'Compute secure GraphSAGE-style embeddings of the merged entities.'
    command_name = 'embed'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--depth', type=int, default=2)
        parser.add_argument('--dim', type=int, default=4)
        parser.add_argument('--agg', choices=['mean', 'pooling'], default='mean')
        parser.add_argument('--out', help='Reconstructed embeddings CSV, or a directory with --keep-shared.')
        parser.add_argument('--keep-shared', action='store_true', help='Write per-party share files instead.')
        parser.add_argument('--secret-divisor', action='store_true',
                            help='Divide the mean by a shared degree with DIV.')

    def run(self, options):
        session = self.open_session(options)
        runtime, universe = session.runtime, session.universe
        seed = runtime.seed
        store, gnn, _ = embed_universe(runtime, universe, options['depth'], options['dim'], options['agg'], seed,
                                       secret_divisor=options['secret_divisor'])

        if options['keep_shared']:
            out = self.output_dir(options, 'embeddings')
            store.export_shares(out)
            self.stdout.write(f'Share files written to {out}')
        else:
            out = self.output_dir(options, 'embeddings.csv')
            out.parent.mkdir(parents=True, exist_ok=True)
            values = decode_array(mpc.open_values(runtime, store.final, 'embeddings'), runtime.config)
            with open(out, 'w', newline='', encoding='utf-8') as handle:
                writer = csv.writer(handle)
                writer.writerow(['entity'] + [f'h{k}' for k in range(options['dim'])])
                for name, row in zip(store.names, values):
                    writer.writerow([name] + [f'{v:.6f}' for v in row])
            self.stdout.write(f'Embeddings written to {out}')

        summary = {'depth': options['depth'], 'dim': options['dim'], 'aggregator': options['agg']}
        if options['oracle']:
            secure = decode_array(mpc.reconstruct_array(store.final), runtime.config)
            layers = universe_gnn(universe, options['depth'], options['dim'], options['agg'], seed,
                                  gnn.activation, runtime.config)
            error = float(np.max(np.abs(secure - decode_array(layers[-1], runtime.config))))
            bound = 2.0 ** (6 - runtime.config.frac_bits)
            summary['oracle_error'] = error
            if error > bound:
                raise AcceptanceFailure(f'embedding error {error:.3e} exceeds {bound:.3e}')
            self.stdout.write(self.style.SUCCESS(f'Oracle: max error {error:.3e} (bound {bound:.3e}).'))
        return runtime, summary
