import json

from django.core.management.base import BaseCommand, CommandError

from ...conf import secure_kg_setting
from ...models import ProtocolRun
from ...selftest import CHECKS, run_selftest
from ...serializers import SelftestResultSerializer


class Command(BaseCommand):
    help = 'Run the acceptance checks and report bounds against observed errors.'

    def add_arguments(self, parser):
        parser.add_argument('--json', action='store_true', help='Print machine-readable results.')
        parser.add_argument('--quick', action='store_true', help='Smaller samples, same bounds.')
        parser.add_argument('--only', nargs='+', choices=list(CHECKS), help='Run only these checks.')
        parser.add_argument('--seed', type=int, default=None)
        parser.add_argument('--oracle', action='store_true', help='Accepted for symmetry; every check is an oracle diff.')
        parser.add_argument('--dealer-file', help='Replay recorded dealer material in the MUL check.')
        parser.add_argument('--record-dealer', help='Record the MUL check\'s dealer material here.')

    def handle(self, *args, **options):
        seed = options['seed'] if options['seed'] is not None else secure_kg_setting('DEFAULT_SEED')
        try:
            results = run_selftest(options['only'], seed=seed, quick=options['quick'],
                                   dealer_file=options['dealer_file'], record_dealer=options['record_dealer'])
        except ValueError as exc:
            raise CommandError(str(exc))

        data = SelftestResultSerializer([r.as_dict() for r in results], many=True).data
        if options['json']:
            self.stdout.write(json.dumps(data, indent=2))
        else:
            self.stdout.write(f'{"check":<16} {"bound":>12} {"observed":>12} {"seconds":>8}  result')
            for result in results:
                bound = '-' if result.bound is None else f'{result.bound:.3e}'
                observed = '-' if result.observed is None else f'{result.observed:.3e}'
                verdict = self.style.SUCCESS('pass') if result.passed else self.style.ERROR('FAIL')
                self.stdout.write(f'{result.name:<16} {bound:>12} {observed:>12} {result.seconds:>8.2f}  {verdict}')
                if result.detail:
                    self.stdout.write(f'    {result.detail}')

        failed = [r.name for r in results if not r.passed]
        ProtocolRun.record('selftest', status='failed' if failed else 'ok', seed=seed,
                           summary={'results': [dict(item) for item in data]})
        if failed:
            raise CommandError(f'Checks failed: {", ".join(failed)}', returncode=2)
        self.stdout.write(self.style.SUCCESS(f'All {len(results)} checks passed.'))
