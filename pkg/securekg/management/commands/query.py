from ...exceptions import AcceptanceFailure
from ...oracles import plain_query
from ...query import parse_program, run_query
from ..base import SecureKgCommand


class Command(SecureKgCommand):
    help = 'Run a traversal program over the merged graphs and print the matching entities.'
    command_name = 'query'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--program', required=True,
                            help='Semicolon separated instructions, e.g. "start Alice; out 2; where 1 >= 0.5".')

    def run(self, options):
        program = parse_program(options['program'])
        session = self.open_session(options)
        result = run_query(session.runtime, program, session.universe)
        for name in sorted(result):
            self.stdout.write(name)
        if not result:
            self.stdout.write(self.style.WARNING('(no entities)'))

        if options['oracle']:
            expected = plain_query(program, session.universe, session.runtime.config)
            if expected != result:
                raise AcceptanceFailure(f'secure {sorted(result)} vs plaintext {sorted(expected)}')
            self.stdout.write(self.style.SUCCESS('Oracle: union-graph traversal agrees.'))
        return session.runtime, {'program': options['program'], 'result': sorted(result)}
