import csv
import json
import tempfile
from io import StringIO
from pathlib import Path
from unittest import mock

import numpy as np
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from hierarchy.models import SmootherKind
from kernel.exceptions import BreakdownNumerical, ConfigError, UnknownParameter
from kernel.matrixmarket import read_header, read_matrix
from problems.utils import poisson1d

from .ensemble import _with_fallback, default_instances, hierarchies_for
from .report_service import ReportService
from .schema import InstanceConfig, ProblemConfig, SmootherConfig, parse_spec

POISSON7 = {'problem': {'kind': 'poisson1d', 'm': 7}}


def spec_of(data):
    return parse_spec(json.dumps(data))


def without_timestamp(doc):
    return {k: v for k, v in doc.items() if k != 'generated_at'}


class CommandTestCase(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def config(self, data, name='config.json'):
        path = self.dir / name
        path.write_text(data if isinstance(data, str) else json.dumps(data))
        return str(path)

    def call(self, *args, **options):
        out = StringIO()
        call_command(*args, stdout=out, **options)
        return out.getvalue()

    def assertExitCode(self, code, *args, **options):
        with self.assertRaises(CommandError) as ctx:
            self.call(*args, **options)
        self.assertEqual(ctx.exception.returncode, code)
        return str(ctx.exception)


class SchemaTest(SimpleTestCase):
    def test_defaults(self):
        spec = spec_of(POISSON7)
        self.assertEqual(spec.nu, 1)
        self.assertTrue(spec.postsmoothing)
        self.assertEqual(spec.inner[0].kind, 'exact')
        self.assertEqual(spec.smoother.kind, SmootherKind.GAUSS_SEIDEL)

    def test_json_error_has_line_and_column(self):
        with self.assertRaises(ConfigError) as ctx:
            parse_spec('{\n  "problem": {"kind": "poisson1d",\n}')
        self.assertEqual(ctx.exception.line, 3)
        self.assertIsNotNone(ctx.exception.column)

    def test_unknown_field_has_path(self):
        with self.assertRaises(ConfigError) as ctx:
            spec_of({'problem': {'kind': 'poisson1d', 'm': 7, 'size': 3}})
        self.assertEqual(ctx.exception.field, 'problem.size')

    def test_nested_list_path(self):
        with self.assertRaises(ConfigError) as ctx:
            spec_of({**POISSON7, 'inner': [{'kind': 'cg', 'ell': 0}]})
        self.assertEqual(ctx.exception.field, 'inner[0].ell')

    def test_chain_length_must_match_nu(self):
        with self.assertRaises(ConfigError):
            spec_of({**POISSON7, 'nu': 3, 'inner': [{'kind': 'cg'}, {'kind': 'exact'}]})

    def test_required_fields(self):
        for data in (
            {'problem': {'kind': 'poisson1d'}},
            {'problem': {'kind': 'random_spd'}},
            {**POISSON7, 'smoother': {'kind': 'weighted_jacobi'}},
            {**POISSON7, 'inner': [{'kind': 'rbcd'}]},
            {**POISSON7, 'splitting': {'kind': 'standard', 'force_rank_deficient_SAP': True}},
        ):
            with self.subTest(data=data), self.assertRaises(ConfigError):
                spec_of(data)

    def test_seed_range(self):
        self.assertEqual(spec_of({**POISSON7, 'seed': 2 ** 64 - 1}).seed, 2 ** 64 - 1)
        with self.assertRaises(ConfigError):
            spec_of({**POISSON7, 'seed': 2 ** 64})

    def test_relative_paths_resolve_against_config(self):
        with tempfile.TemporaryDirectory() as tmp:
            ReportService.export_problem(spec_of(POISSON7), tmp)
            spec = parse_spec(json.dumps({'problem': {'kind': 'file', 'path': 'A.mtx'}}), base=tmp)
            self.assertEqual(Path(spec.problem.path), Path(tmp) / 'A.mtx')

    def test_missing_file(self):
        with self.assertRaises(ConfigError) as ctx:
            parse_spec(json.dumps({'problem': {'kind': 'file', 'path': 'nope.mtx'}}), base='/nonexistent')
        self.assertEqual(ctx.exception.field, 'problem.path')

    def test_echo_omits_unset_optionals(self):
        echo = spec_of(POISSON7).echo()
        self.assertNotIn('out', echo)
        self.assertNotIn('n', echo['problem'])


class EnsembleTest(SimpleTestCase):
    def test_default_instance_counts(self):
        instances = default_instances()
        self.assertEqual(len(instances), 50)
        deficient = [i for i in instances if i.splitting.force_rank_deficient_SAP]
        self.assertEqual(len(deficient), 10)
        sizes = [i.problem.n for i in instances if i.problem.kind == 'random_spd']
        self.assertLessEqual(max(sizes), 12)

    def test_invalid_smoother_falls_back(self):
        instance = InstanceConfig(
            problem=ProblemConfig(kind='poisson1d', m=7),
            smoother=SmootherConfig(kind=SmootherKind.WEIGHTED_JACOBI, omega=5.0),
        )
        with self.assertLogs('reports.ensemble', level='WARNING'):
            h = _with_fallback(instance)
        self.assertEqual(h.smoother.kind, SmootherKind.GAUSS_SEIDEL)

    def test_empty_spec_has_no_instances(self):
        with self.assertRaisesMessage(ConfigError, 'no instances'):
            hierarchies_for(spec_of({}))

    def test_two_grid_twins(self):
        hierarchies = hierarchies_for(spec_of({**POISSON7, 'ensemble': {'two_grid': True}}))
        self.assertEqual(len(hierarchies), 2)
        self.assertFalse(hierarchies[0].is_two_grid)
        self.assertTrue(hierarchies[1].is_two_grid)
        np.testing.assert_array_equal(hierarchies[0].P, hierarchies[1].P)

    def test_default_ensemble_passes_every_identity(self):
        doc = ReportService.verify_identities(spec_of({'ensemble': {'default': True, 'two_grid': True}}))
        failed = [name for name, passed in doc['verdicts'].items() if not passed]
        self.assertEqual(failed, [])
        self.assertTrue(doc['passed'])
        self.assertEqual(len(doc['instances']), 100)
        branches = {section['theory']['branch'] for section in doc['instances']}
        self.assertEqual(branches, {'full_rank', 'deficient'})


class VerifyIdentitiesCommandTest(CommandTestCase):
    def test_poisson_passes(self):
        out = self.dir / 'report.json'
        text = self.call('verify_identities', config=self.config(POISSON7), out=str(out))
        self.assertIn('checks passed', text)

        doc = json.loads(out.read_text())
        self.assertTrue(doc['passed'])
        self.assertEqual(doc['checks_failed'], 0)
        theory = doc['instances'][0]['theory']
        self.assertAlmostEqual(1.0 - 1.0 / theory['K_TL_spectral'], theory['norm_E_TL'], delta=1e-9)
        self.assertEqual(doc['spec']['problem']['m'], 7)

    def test_out_from_config(self):
        out = self.dir / 'nested' / 'report.json'
        self.call('verify_identities', config=self.config({**POISSON7, 'out': str(out)}))
        self.assertTrue(out.is_file())

    def test_invalid_smoother_exits_with_config_code(self):
        data = {**POISSON7, 'smoother': {'kind': 'weighted_jacobi', 'omega': 5.0}}
        message = self.assertExitCode(2, 'verify_identities', config=self.config(data), out=str(self.dir / 'r.json'))
        self.assertIn('SmootherInvalid', message)

    def test_empty_ensemble(self):
        message = self.assertExitCode(2, 'verify_identities', config=self.config({'ensemble': {'default': False}}))
        self.assertIn('no instances', message)

    def test_bad_json(self):
        message = self.assertExitCode(2, 'verify_identities', config=self.config('{"problem": '))
        self.assertIn(':1:', message)

    def test_missing_config(self):
        self.assertExitCode(2, 'verify_identities', config=str(self.dir / 'absent.json'))

    def test_failed_check_exits_with_one(self):
        failing = mock.patch.dict('theory.theory_service.UPPER_LIMITS', {'xz1_gap': -1.0})
        with failing:
            self.assertExitCode(1, 'verify_identities', config=self.config(POISSON7), out=str(self.dir / 'r.json'))


class RunCommandTest(CommandTestCase):
    CG_RUN = {**POISSON7, 'inner': [{'kind': 'cg', 'ell': 2}], 'trials': 4, 'seed': 11}

    def run_doc(self, data, statistical=False, **options):
        """Report of a run; statistical runs may fail an expectation check without failing the test"""
        out = self.dir / 'run.json'
        try:
            self.call('run', config=self.config(data), out=str(out), **options)
        except CommandError as e:
            if not statistical or e.returncode != 1:
                raise
        return json.loads(out.read_text())

    def test_deterministic_chain_passes(self):
        doc = self.run_doc(self.CG_RUN)
        self.assertTrue(doc['passed'])
        section = doc['instances'][0]
        self.assertEqual(len(section['runs']), 4)
        self.assertEqual([run['trial'] for run in section['runs']], [0, 1, 2, 3])
        sigma = section['theory']['sigma_ITL']
        for run in section['runs']:
            self.assertLessEqual(run['sweeps'][0]['contraction'], sigma + 1e-9)

    def test_exact_chain_contraction_within_norm(self):
        doc = self.run_doc({**POISSON7, 'trials': 3})
        section = doc['instances'][0]
        norm = section['theory']['norm_E_TL']
        for run in section['runs']:
            self.assertLessEqual(run['sweeps'][0]['contraction'], norm + 1e-9)
            self.assertEqual(run['sweeps'][0]['inner']['product_eps'], 0.0)

    def test_same_seed_same_report(self):
        first = self.run_doc(self.CG_RUN)
        second = self.run_doc(self.CG_RUN)
        self.assertEqual(without_timestamp(first), without_timestamp(second))

    def test_worker_count_does_not_change_results(self):
        data = {**POISSON7, 'inner': [{'kind': 'rcd', 'ell': 3}], 'trials': 12, 'seed': 5}
        serial = self.run_doc(data, statistical=True, workers=1)
        parallel = self.run_doc(data, statistical=True, workers=8)
        self.assertEqual(without_timestamp(serial), without_timestamp(parallel))

    def test_seed_and_trials_override(self):
        doc = self.run_doc(self.CG_RUN, seed=99, trials=2)
        self.assertEqual(doc['seed'], 99)
        self.assertEqual(len(doc['instances'][0]['runs']), 2)

    def test_seed_out_of_range(self):
        self.assertExitCode(2, 'run', config=self.config(self.CG_RUN), seed=2 ** 64)

    def test_randomized_chain_reports_standard_error(self):
        doc = self.run_doc({**POISSON7, 'inner': [{'kind': 'rcd', 'ell': 2}], 'trials': 6}, statistical=True)
        section = doc['instances'][0]
        self.assertEqual(section['theory']['epsilon_cert']['mode'], 'in_expectation')
        stats = section['statistics']['coarse_accuracy_sq']
        self.assertEqual(stats['trials'], 6)
        self.assertGreaterEqual(stats['se'], 0.0)


class RunServiceTest(SimpleTestCase):
    def test_solver_error_aborts_trial_and_is_recorded(self):
        spec = spec_of({**POISSON7, 'trials': 2})
        broken = mock.patch(
            'reports.report_service.TwoLevelService.inexact_two_level',
            side_effect=BreakdownNumerical('p^T A p vanished'),
        )
        with broken, self.assertLogs('reports.report_service', level='ERROR'):
            doc = ReportService.run(spec, workers=1)
        self.assertFalse(doc['passed'])
        self.assertIn('0:trial[1].completed', doc['verdicts'])
        self.assertIn('BreakdownNumerical', doc['instances'][0]['runs'][0]['error'])

    def test_non_finite_values_become_null(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = ReportService.write_json({'x': float('inf'), 'y': np.float64('nan'), 'z': np.int64(3)}, Path(tmp) / 'r.json')
            self.assertEqual(json.loads(path.read_text()), {'x': None, 'y': None, 'z': 3})


class SweepTest(CommandTestCase):
    CG = {'problem': {'kind': 'poisson1d', 'm': 15}, 'inner': [{'kind': 'cg', 'ell': 1}], 'trials': 3}

    def test_ell_rows(self):
        rows = ReportService.sweep(spec_of(self.CG), 'ell', [1, 2, 3, 4])
        self.assertEqual([row['value'] for row in rows], [1, 2, 3, 4])
        measured = [row['measured_eps'] for row in rows]
        for prev, cur in zip(measured, measured[1:]):
            self.assertLessEqual(cur, prev + 1e-12)
        for row in rows:
            self.assertTrue(row['passed'])
            if row['cert_applicable']:
                self.assertGreaterEqual(row['bound_slack'], -1e-9)

    def test_nu_certificate_is_a_power(self):
        rows = ReportService.sweep(spec_of(self.CG), 'nu', [1, 2, 3])
        eps1 = rows[0]['eps_cert']
        for row in rows:
            self.assertAlmostEqual(row['eps_cert'], eps1 ** row['value'], delta=1e-14)

    def test_unknown_parameter(self):
        with self.assertRaises(UnknownParameter):
            ReportService.sweep(spec_of(self.CG), 'gamma', [1])

    def test_empty_values(self):
        with self.assertRaises(ConfigError):
            ReportService.sweep(spec_of(self.CG), 'ell', [])

    def test_omega_needs_weighted_jacobi(self):
        with self.assertRaises(ConfigError):
            ReportService.sweep(spec_of(self.CG), 'omega', [0.5])

    def test_csv_output(self):
        out = self.dir / 'sweep.csv'
        self.call('sweep', config=self.config(self.CG), parameter='ell', values='1,2', out=str(out))
        with out.open() as handle:
            rows = list(csv.DictReader(handle))
        self.assertEqual([row['value'] for row in rows], ['1', '2'])
        self.assertEqual(rows[0]['parameter'], 'ell')

    def test_json_output(self):
        out = self.dir / 'sweep.json'
        self.call('sweep', config=self.config(self.CG), parameter='ell', values='2', out=str(out), format='json')
        doc = json.loads(out.read_text())
        self.assertEqual(doc['parameter'], 'ell')
        self.assertEqual(len(doc['rows']), 1)

    def test_command_errors(self):
        config = self.config(self.CG)
        self.assertExitCode(2, 'sweep', config=config, parameter='ell', values='')
        self.assertExitCode(2, 'sweep', config=config, parameter='gamma', values='1')
        self.assertExitCode(2, 'sweep', config=config, parameter='ell', values='one,two')


class ExportProblemTest(CommandTestCase):
    def test_poisson_files(self):
        self.call('export_problem', config=self.config(POISSON7), out=str(self.dir / 'out'))
        target = self.dir / 'out'
        self.assertEqual(read_header(target / 'A.mtx'), '%%MatrixMarket matrix coordinate real symmetric')
        self.assertEqual(read_header(target / 'P.mtx'), '%%MatrixMarket matrix coordinate real general')

        sidecar = json.loads((target / 'problem.json').read_text())
        self.assertEqual((sidecar['splitting']['n'], sidecar['splitting']['n_c']), (7, 3))
        self.assertIn('invariant_residuals', sidecar)

    def test_round_trip(self):
        ReportService.export_problem(spec_of(POISSON7), self.dir)
        A = read_matrix(self.dir / 'A.mtx', symmetric=True)
        np.testing.assert_array_equal(A.entries, poisson1d(7).A.entries)

        data = {'problem': {'kind': 'file', 'path': 'A.mtx'}, 'splitting': {'kind': 'file', 'S_path': 'S.mtx', 'P_path': 'P.mtx'}}
        exported = hierarchies_for(parse_spec(json.dumps(data), base=self.dir))[0]
        np.testing.assert_array_equal(exported.S, read_matrix(self.dir / 'S.mtx'))
        np.testing.assert_array_equal(exported.A.entries, A.entries)

    def test_several_instances_get_subdirectories(self):
        data = {'ensemble': {'instances': [POISSON7, {'problem': {'kind': 'poisson1d', 'm': 9}}], 'two_grid': False}}
        ReportService.export_problem(spec_of(data), self.dir)
        self.assertTrue((self.dir / 'instance_000' / 'A.mtx').is_file())
        self.assertTrue((self.dir / 'instance_001' / 'A.mtx').is_file())

    def test_unwritable_path(self):
        blocker = self.dir / 'blocker'
        blocker.write_text('')
        target = blocker / 'out'
        message = self.assertExitCode(2, 'export_problem', config=self.config(POISSON7), out=str(target))
        self.assertIn(str(target), message)
