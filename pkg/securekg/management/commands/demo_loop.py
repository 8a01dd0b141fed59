from ...exceptions import AcceptanceFailure
from ...oracles import plain_reachable, union_adjacency
from ...query import closes_loop
from ..base import SecureKgCommand


class Command(SecureKgCommand):
    help = 'Decide whether a proposed guarantee would close a guarantee loop.'
    command_name = 'demo_loop'
    default_fixture = 'guarantee'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--borrower', default='E1', help='Entity being guaranteed.')
        parser.add_argument('--guarantor', default='E3', help='Entity offering the guarantee.')
        parser.add_argument('--relation', default='guarantees')
        parser.add_argument('--depth', type=int, default=3)
        parser.add_argument('--view', choices=['merged', 'single'], default='merged')
        parser.add_argument('--party', type=int, default=2, help='Bank whose own graph the single view uses.')

    def run(self, options):
        session = self.open_session(options)
        runtime, universe = session.runtime, session.universe
        relation = universe.relations.resolve(options['relation'])
        borrower = universe.entity_id(options['borrower'])
        guarantor = universe.entity_id(options['guarantor'])

        if options['view'] == 'merged':
            loop = closes_loop(runtime, universe, options['guarantor'], options['borrower'],
                               options['relation'], options['depth'])
            oracle_graph = union_adjacency(universe, relation)
        else:
            # a single bank decides on its own plaintext graph
            oracle_graph = universe.adjacency(options['party'], relation)
            loop = plain_reachable(oracle_graph, borrower, guarantor, options['depth'])

        verdict = 'REJECT' if loop else 'ALLOW'
        style = self.style.ERROR if loop else self.style.SUCCESS
        self.stdout.write(style(
            f'{verdict}: {universe.names[guarantor]} -> {universe.names[borrower]} '
            f'({options["view"]} view, depth {options["depth"]})'))

        if options['oracle']:
            expected = plain_reachable(oracle_graph, borrower, guarantor, options['depth'])
            if expected != loop:
                raise AcceptanceFailure(f'secure verdict {verdict} disagrees with reachability')
            self.stdout.write(self.style.SUCCESS('Oracle: reachability agrees.'))
        return runtime, {'verdict': verdict, 'view': options['view']}
