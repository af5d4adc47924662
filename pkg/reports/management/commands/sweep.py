from django.core.management.base import CommandError

from kernel.exceptions import ConfigError
from reports.management.base import EXIT_CHECKS_FAILED, ReportCommand
from reports.report_service import ReportService, default_out

INTEGER_PARAMETERS = ('ell', 'nu', 'n')


class Command(ReportCommand):
    help = 'Repeat a run over a list of values for one parameter'

    def add_arguments(self, parser):
        self.add_config_argument(parser)
        parser.add_argument('--parameter', required=True, help='ell, nu, n, omega or cond_target')
        parser.add_argument('--values', required=True, help='Comma-separated values, e.g. 1,2,4,8')
        parser.add_argument('--out', help='Output path (default: ITL_REPORT_DIR/sweep.<format>)')
        parser.add_argument('--format', choices=['csv', 'json'], default='csv')

    def parse_values(self, parameter, raw):
        cast = int if parameter in INTEGER_PARAMETERS else float
        try:
            return [cast(item) for item in raw.split(',') if item.strip()]
        except ValueError:
            self.fail_config(ConfigError(f"--values: cannot read '{raw}' as {cast.__name__}s", field='values'))

    def handle(self, *args, **options):
        spec = self.load(options)
        parameter = options['parameter']
        values = self.parse_values(parameter, options['values'])

        rows = self.guarded(ReportService.sweep, spec, parameter, values)
        fmt = options['format']
        path = options['out'] or default_out(f'sweep.{fmt}')
        if fmt == 'csv':
            self.guarded(ReportService.write_csv, rows, path)
        else:
            self.guarded(ReportService.write_json, {'parameter': parameter, 'rows': rows}, path)

        failed = [row['value'] for row in rows if not row['passed']]
        if failed:
            self.stdout.write(self.style.ERROR(f'Checks failed at {parameter} = {failed}; table written to {path}'))
            raise CommandError(f'{len(failed)} of {len(rows)} sweep rows failed', returncode=EXIT_CHECKS_FAILED)
        self.stdout.write(self.style.SUCCESS(f'{len(rows)} rows passed; table written to {path}'))
