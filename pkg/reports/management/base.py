import logging

from django.core.management.base import BaseCommand, CommandError

from kernel.exceptions import ConfigError, TwoLevelError
from reports.schema import SEED_MAX, load_spec

logger = logging.getLogger(__name__)

EXIT_CHECKS_FAILED = 1
EXIT_CONFIG = 2


class ReportCommand(BaseCommand):
    """
    Shared plumbing for the report commands: config loading, the exit-code
    contract (0 all checks pass, 1 a check failed, 2 configuration or input
    error) and the closing summary line.
    """

    def add_config_argument(self, parser):
        parser.add_argument('--config', required=True, help='JSON run config')

    def load(self, options):
        try:
            return load_spec(options['config'])
        except ConfigError as e:
            self.fail_config(e)

    def fail_config(self, error):
        logger.error(f'{type(error).__name__}: {error}')
        raise CommandError(f'{type(error).__name__}: {error}', returncode=EXIT_CONFIG)

    def guarded(self, func, *args, **kwargs):
        """Run a service call, mapping domain errors to the configuration exit code"""
        try:
            return func(*args, **kwargs)
        except TwoLevelError as e:
            # config errors, invalid smoothers, rank failures and I/O problems all come from the inputs
            self.fail_config(e)

    def check_seed(self, seed):
        if seed is not None and not 0 <= seed <= SEED_MAX:
            self.fail_config(ConfigError(f"--seed must be an unsigned 64-bit integer, got {seed}", field='seed'))
        return seed

    def finish(self, doc, path):
        failed = doc['checks_failed']
        total = doc['checks_total']
        if failed:
            self.stdout.write(self.style.ERROR(f'{failed} of {total} checks failed; report written to {path}'))
            raise CommandError(f'{failed} of {total} checks failed', returncode=EXIT_CHECKS_FAILED)
        self.stdout.write(self.style.SUCCESS(f'All {total} checks passed; report written to {path}'))
