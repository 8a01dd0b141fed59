import json
import logging
from pathlib import Path

import yaml
from django.core.management.base import BaseCommand, CommandError
from rest_framework import serializers

from ..conf import secure_kg_setting
from ..exceptions import AcceptanceFailure, SecureKgError
from ..fixtures import fixture_config
from ..models import ProtocolRun
from ..pipeline import open_session

logger = logging.getLogger(__name__)


class SecureKgCommand(BaseCommand):
    """
    Common options and error mapping for the toolkit's commands.

    Domain, config and unreadable-input errors exit with 1, oracle disagreements with 2. Every
    run is recorded as a :class:`ProtocolRun`.
    """

    command_name = None
    default_fixture = 'companies'

    def add_arguments(self, parser):
        parser.add_argument('--config', help='Run config (JSON or YAML). Defaults to a bundled fixture.')
        parser.add_argument('--seed', type=int, help='Override the config seed.')
        parser.add_argument('--oracle', action='store_true', help='Also compute the plaintext answer and compare.')
        parser.add_argument('--debug', action='store_true', help='Enable debug reconstructions and checks.')
        parser.add_argument('--transcript', help='Write the message transcript as JSON lines.')

    def open_session(self, options):
        path = options.get('config') or fixture_config(self.default_fixture)
        return open_session(path, seed=options.get('seed'), debug=options.get('debug', False))

    def output_dir(self, options, name):
        out = options.get('out')
        return Path(out) if out else Path(secure_kg_setting('OUTPUT_DIR')) / name

    def run(self, options):
        """Return ``(runtime, summary)``."""
        raise NotImplementedError

    def handle(self, *args, **options):
        runtime = None
        try:
            runtime, summary = self.run(options)
        except AcceptanceFailure as exc:
            ProtocolRun.record(self.command_name, status='failed', summary={'error': str(exc)})
            raise CommandError(f'Oracle check failed: {exc}', returncode=2)
        except serializers.ValidationError as exc:
            ProtocolRun.record(self.command_name, status='error', summary={'error': exc.detail})
            raise CommandError(f'Invalid run config: {exc.detail}')
        except (OSError, json.JSONDecodeError, yaml.YAMLError) as exc:
            ProtocolRun.record(self.command_name, status='error', summary={'error': str(exc)})
            raise CommandError(f'Cannot read input: {exc}', returncode=1)
        except SecureKgError as exc:
            ProtocolRun.record(self.command_name, status='error', summary={'error': str(exc)})
            raise CommandError(f'{type(exc).__name__}: {exc}')

        if runtime is not None and options.get('transcript'):
            runtime.transcript.dump(options['transcript'])
            self.stdout.write(f'Transcript written to {options["transcript"]}')
        run = ProtocolRun.record(self.command_name, runtime, summary=summary)
        logger.info('Recorded %s', run)
        return None
