import csv
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from django.conf import settings
from django.utils import timezone

from coarse.models import AccuracyCert
from coarse.streams import RandomStream
from engine.models import RunConfig
from engine.two_level_service import TwoLevelService
from itlverify import __version__
from kernel.exceptions import ConfigError, IoError, TwoLevelError, UnknownParameter
from kernel.matrixmarket import write_matrix
from theory.monte_carlo import mean_and_se
from theory.theory_service import TheoryService

from .ensemble import build_hierarchy, hierarchies_for

logger = logging.getLogger(__name__)

SWEEP_PARAMETERS = ('ell', 'nu', 'n', 'omega', 'cond_target')
SWEEP_COLUMNS = (
    'parameter', 'value', 'eps_cert', 'cert_mode', 'cert_applicable', 'measured_eps',
    'sigma_ITL', 'contraction', 'bound_slack', 'passed',
)
# key spaces under the run seed: starting vectors and solver randomness
U0_KEY = 0
SOLVER_KEY = 1


def _plain(value):
    """JSON-safe copy: numpy scalars become Python numbers, non-finite floats become null"""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def run_config_of(spec):
    return RunConfig(
        nu=spec.nu,
        postsmoothing=spec.postsmoothing,
        outer_sweeps=spec.outer_sweeps,
        chain=tuple(spec.inner),
        seed=spec.seed,
    )


def default_workers():
    return getattr(settings, 'ITL_MAX_WORKERS', 4)


def default_out(name):
    return Path(getattr(settings, 'ITL_REPORT_DIR', 'reports_out')) / name


class ReportService:
    @staticmethod
    def document(command, spec, sections, extra=None):
        verdicts = {}
        for index, section in enumerate(sections):
            for name, passed in section.get('verdicts', {}).items():
                verdicts[f'{index}:{name}'] = passed
        doc = {
            'version': __version__,
            'command': command,
            'spec': spec.echo(),
            **(extra or {}),
            'instances': sections,
            'verdicts': verdicts,
            'checks_total': len(verdicts),
            'checks_failed': sum(1 for passed in verdicts.values() if not passed),
            'passed': all(verdicts.values()),
            'generated_at': timezone.now().isoformat(),
        }
        return _plain(doc)

    @staticmethod
    def verify_identities(spec):
        """Identity suite over every hierarchy the config names"""
        sections = []
        for h in hierarchies_for(spec):
            report = TheoryService.verify_all(h)
            sections.append({
                'hierarchy': h.describe(),
                'theory': report.to_dict(),
                'verdicts': report.verdicts(),
            })
        doc = ReportService.document('verify_identities', spec, sections)
        logger.info(f"verify_identities: {len(sections)} instances, {doc['checks_failed']} of {doc['checks_total']} checks failed")
        return doc

    @staticmethod
    def run_trial(h, f, cfg, base, trial):
        """One seeded trial; errors are returned, not raised"""
        u0 = base.child(U0_KEY, trial).rng().standard_normal(h.n)
        try:
            _, trace = TwoLevelService.inexact_two_level(h, f, u0, cfg, stream=base.child(SOLVER_KEY, trial))
            return trace, None
        except (TwoLevelError, np.linalg.LinAlgError) as e:
            logger.error(f"{h.problem.label}: trial {trial} aborted: {e}")
            return None, f'{type(e).__name__}: {e}'

    @staticmethod
    def run_trials(h, cfg, trials, seed, workers=None):
        base = RandomStream(seed)
        workers = max(1, workers or default_workers())
        f = h.problem.f
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda t: ReportService.run_trial(h, f, cfg, base, t), range(trials)))

    @staticmethod
    def statistics(traces):
        if not traces:
            return {}
        first = [trace.sweeps[0] for trace in traces]
        contraction = mean_and_se([s.contraction for s in first])
        accuracy = mean_and_se([s.inner.overall_accuracy ** 2 for s in first])
        return {'contraction': contraction.to_dict(), 'coarse_accuracy_sq': accuracy.to_dict()}

    @staticmethod
    def run_section(h, spec, trials, seed, workers=None):
        cfg = run_config_of(spec)
        results = ReportService.run_trials(h, cfg, trials, seed, workers)
        traces = [trace for trace, _ in results if trace is not None]
        cert = AccuracyCert.chain([s.epsilon_apriori(h.A_c) for s in cfg.build_chain(h)])
        report = TheoryService.verify_all(h, traces, cert=cert)

        verdicts = report.verdicts()
        runs = []
        for trial, (trace, error) in enumerate(results):
            if error is not None:
                verdicts[f'trial[{trial}].completed'] = False
                runs.append({'trial': trial, 'error': error})
            else:
                runs.append({'trial': trial, **trace.summary()})
        return {
            'hierarchy': h.describe(),
            'seed': seed,
            'trials': trials,
            'theory': report.to_dict(),
            'statistics': ReportService.statistics(traces),
            'runs': runs,
            'verdicts': verdicts,
        }

    @staticmethod
    def run(spec, seed=None, trials=None, workers=None):
        seed = spec.seed if seed is None else seed
        trials = spec.trials if trials is None else trials
        if trials < 1:
            raise ConfigError(f"trials must be >= 1, got {trials}", field='trials')
        sections = [ReportService.run_section(h, spec, trials, seed, workers) for h in hierarchies_for(spec)]
        doc = ReportService.document('run', spec, sections, {'seed': seed, 'trials': trials})
        logger.info(f"run: {len(sections)} instances x {trials} trials, {doc['checks_failed']} checks failed")
        return doc

    @staticmethod
    def variant(spec, parameter, value):
        """Copy of spec with one parameter replaced"""
        if parameter not in SWEEP_PARAMETERS:
            raise UnknownParameter(f"Unknown sweep parameter '{parameter}', expected one of {', '.join(SWEEP_PARAMETERS)}")
        if spec.problem is None:
            raise ConfigError("sweep needs a top-level problem", field='problem')

        if parameter == 'ell':
            inner = [solver.model_copy(update={'ell': int(value)}) for solver in spec.inner]
            return spec.model_copy(update={'inner': inner})
        if parameter == 'nu':
            if len(spec.inner) != 1:
                raise ConfigError("a nu sweep needs a single inner solver to repeat", field='inner')
            return spec.model_copy(update={'nu': int(value)})
        if parameter == 'omega':
            if spec.smoother.kind != 'weighted_jacobi':
                raise ConfigError("an omega sweep needs the weighted_jacobi smoother", field='smoother.kind')
            return spec.model_copy(update={'smoother': spec.smoother.model_copy(update={'omega': float(value)})})
        if parameter == 'cond_target':
            if spec.problem.kind != 'random_spd':
                raise ConfigError("a cond_target sweep needs a random_spd problem", field='problem.kind')
            return spec.model_copy(update={'problem': spec.problem.model_copy(update={'cond_target': float(value)})})
        size = 'n' if spec.problem.kind == 'random_spd' else 'm'
        return spec.model_copy(update={'problem': spec.problem.model_copy(update={size: int(value)})})

    @staticmethod
    def sweep_row(spec, parameter, value):
        h = build_hierarchy(spec.instances()[-1])
        section = ReportService.run_section(h, spec, spec.trials, spec.seed)
        theory = section['theory']
        first = [run['sweeps'][0] for run in section['runs'] if 'error' not in run]
        cert = theory['epsilon_cert']
        sigma = theory['sigma_ITL']
        contraction = float(np.mean([s['contraction'] for s in first])) if first else None
        return {
            'parameter': parameter,
            'value': value,
            'eps_cert': cert['epsilon'],
            'cert_mode': cert['mode'],
            'cert_applicable': cert['applicable'],
            'measured_eps': float(np.mean([s['inner']['product_eps'] for s in first])) if first else None,
            'sigma_ITL': sigma,
            'contraction': contraction,
            # sigma_ITL bounds the first-sweep contraction only with postsmoothing on
            'bound_slack': sigma - contraction if None not in (sigma, contraction) and spec.postsmoothing else None,
            'passed': all(section['verdicts'].values()),
        }

    @staticmethod
    def sweep(spec, parameter, values):
        if not values:
            raise ConfigError("sweep needs at least one value", field='values')
        variants = [ReportService.variant(spec, parameter, value) for value in values]
        rows = [ReportService.sweep_row(v, parameter, value) for v, value in zip(variants, values)]
        logger.info(f"sweep over {parameter}: {len(rows)} rows")
        return _plain(rows)

    @staticmethod
    def export_problem(spec, out_dir):
        """A.mtx, S.mtx, P.mtx and problem.json per instance"""
        out_dir = Path(out_dir)
        hierarchies = hierarchies_for(spec)
        written = []
        for index, h in enumerate(hierarchies):
            target = out_dir if len(hierarchies) == 1 else out_dir / f'instance_{index:03d}'
            try:
                target.mkdir(parents=True, exist_ok=True)
            except OSError as e:
                raise IoError(f"Cannot create {target}: {e}", path=str(target)) from e
            label = h.problem.label
            written.append(write_matrix(target / 'A.mtx', h.A, comment=label))
            written.append(write_matrix(target / 'S.mtx', h.S, comment=f'S for {label}'))
            written.append(write_matrix(target / 'P.mtx', h.P, comment=f'P for {label}'))
            sidecar = {'version': __version__, **h.describe(), 'problem_params': h.problem.params}
            written.append(ReportService.write_json(sidecar, target / 'problem.json'))
        logger.info(f"Exported {len(hierarchies)} instances to {out_dir}")
        return written

    @staticmethod
    def write_json(document, path):
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(json.dumps(_plain(document), indent=2) + '\n')
        except OSError as e:
            raise IoError(f"Cannot write {path}: {e}", path=str(path)) from e
        logger.info(f"Wrote report {path}")
        return path

    @staticmethod
    def write_csv(rows, path):
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            with path.open('w', newline='') as handle:
                writer = csv.DictWriter(handle, fieldnames=SWEEP_COLUMNS)
                writer.writeheader()
                for row in rows:
                    writer.writerow({k: ('' if row.get(k) is None else row[k]) for k in SWEEP_COLUMNS})
        except OSError as e:
            raise IoError(f"Cannot write {path}: {e}", path=str(path)) from e
        logger.info(f"Wrote sweep table {path}")
        return path
