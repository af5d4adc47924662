from reports.management.base import ReportCommand
from reports.report_service import ReportService


class Command(ReportCommand):
    help = 'Write A, S and P of every configured instance as MatrixMarket files'

    def add_arguments(self, parser):
        self.add_config_argument(parser)
        parser.add_argument('--out', required=True, help='Output directory')

    def handle(self, *args, **options):
        spec = self.load(options)
        written = self.guarded(ReportService.export_problem, spec, options['out'])
        self.stdout.write(self.style.SUCCESS(f"Wrote {len(written)} files to {options['out']}"))
