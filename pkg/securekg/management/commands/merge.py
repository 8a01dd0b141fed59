import csv
import json

import numpy as np

from ...exceptions import AcceptanceFailure
from ...kgstore import save_kg
from ...mpc import reconstruct_array
from ...numeric import decode_array
from ...oracles import plain_merge
from ...serializers import MergeReportSerializer
from ..base import SecureKgCommand


class Command(SecureKgCommand):
    help = 'Align, link and merge the parties\' graphs; write per-party stores and a merge report.'
    command_name = 'merge'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--out', help='Output directory for the merged stores.')
        parser.add_argument('--debug-reconstruct', action='store_true',
                            help='Print the reconstructed shared rows (debug only).')

    def _plain_rows(self, session):
        universe = session.universe
        expected = {}
        for gid in universe.common_entities():
            rows = []
            for party, local in universe.members[gid]:
                kg = session.graphs[party - 1]
                rows.append([cell.value for cell in kg.properties[kg.entity_index(local)]])
            expected[gid] = plain_merge(rows, universe.schema, universe.policy)
        return expected

    def run(self, options):
        session = self.open_session(options)
        universe, runtime = session.universe, session.runtime
        out = self.output_dir(options, 'merge')
        out.mkdir(parents=True, exist_ok=True)

        for kg in universe.graphs:
            save_kg(kg, out / f'party{kg.party}')
        with open(out / 'global_ids.csv', 'w', newline='', encoding='utf-8') as handle:
            writer = csv.writer(handle)
            writer.writerow(['global_id', 'name', 'owners'])
            for gid, entity in enumerate(universe.entities):
                writer.writerow([gid, entity.local_name, ';'.join(map(str, sorted(entity.owner_parties)))])
        report = MergeReportSerializer(universe.report()).data
        (out / 'merge_report.json').write_text(json.dumps(report, indent=2))

        self.stdout.write(self.style.SUCCESS(
            f'Merged {universe.parties} graphs into {universe.size} entities; common: '
            f'{", ".join(report["common"]) or "none"}'))
        self.stdout.write(f'Stores and report written to {out}')

        reconstructed = {}
        if options['debug_reconstruct'] or options['oracle']:
            for gid in universe.common_entities():
                reconstructed[gid] = decode_array(reconstruct_array(universe.shared_row(gid)), runtime.config)
        if options['debug_reconstruct']:
            for gid, row in reconstructed.items():
                values = ', '.join(f'{v:.6f}' for v in row)
                self.stdout.write(f'{universe.names[gid]}: ({values})')

        if options['oracle']:
            tolerance = 2.0 ** (1 - runtime.config.frac_bits)
            for gid, plain in self._plain_rows(session).items():
                expected = np.array([slot.numeric(v) for slot, v in zip(universe.schema, plain)])
                error = float(np.max(np.abs(reconstructed[gid] - expected)))
                if error > tolerance:
                    raise AcceptanceFailure(f'{universe.names[gid]} differs from the plaintext merge by {error}.')
            self.stdout.write(self.style.SUCCESS('Oracle: merged rows match the plaintext merge.'))

        return runtime, {'entities': universe.size, 'common': report['common'], 'out': str(out)}
