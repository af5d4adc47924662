from reports.management.base import ReportCommand
from reports.report_service import ReportService, default_out


class Command(ReportCommand):
    help = 'Run seeded trials of the inexact two-level method and check the bounds'

    def add_arguments(self, parser):
        self.add_config_argument(parser)
        parser.add_argument('--seed', type=int, help='Run seed, overrides the config')
        parser.add_argument('--trials', type=int, help='Number of trials, overrides the config')
        parser.add_argument('--out', help='Report path (default: ITL_REPORT_DIR/run.json)')
        parser.add_argument('--workers', type=int, help='Threads for trial execution')

    def handle(self, *args, **options):
        spec = self.load(options)
        seed = self.check_seed(options['seed'])
        self.stdout.write(f"Running {options['trials'] or spec.trials} trials per instance...")

        doc = self.guarded(ReportService.run, spec, seed=seed, trials=options['trials'], workers=options['workers'])
        path = options['out'] or spec.out or default_out('run.json')
        self.guarded(ReportService.write_json, doc, path)
        self.finish(doc, path)
