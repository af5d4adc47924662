from reports.management.base import ReportCommand
from reports.report_service import ReportService, default_out


class Command(ReportCommand):
    help = 'Evaluate the convergence identities on every instance of a run config'

    def add_arguments(self, parser):
        self.add_config_argument(parser)
        parser.add_argument('--out', help='Report path (default: ITL_REPORT_DIR/verify_identities.json)')

    def handle(self, *args, **options):
        spec = self.load(options)
        doc = self.guarded(ReportService.verify_identities, spec)
        path = options['out'] or spec.out or default_out('verify_identities.json')
        self.guarded(ReportService.write_json, doc, path)
        self.finish(doc, path)
