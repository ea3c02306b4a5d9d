import os

from twisted.internet import defer
from twisted.logger import Logger

from .app import METHODS, SUITE_METHODS, build_runner
from .eval import (
    FAILED, OK, assemble_report, evaluate, map_growth, motion_error_rows, object_trajectory_rows,
    write_metrics)
from .exceptions import (
    BudgetExceeded, DuplicateKeyError, FrameMismatchError, InvalidConfig, RankDeficientError, UnknownKeyError)
from .formulations import HybridFormulation
from .records import write_measurements, write_summaries, write_table
from .sim import generate_scene
from .utils import ensure_dir, format_table

log = Logger()

FAILED_CELL = u'×'
ACCURACY_FIELDS = ('method', 'ate_trans', 'rpe_rot', 'rpe_trans', 'me_rot', 'me_trans')
INCREMENTAL_METHODS = ('ibaseline', 'ihybrid', 'parallel-hybrid')


def run_label(method, relinearize_skip=None):
    if relinearize_skip is None or METHODS[method][1] == 'batch':
        return method
    return '%s-rs%d' % (method, relinearize_skip)


class Launcher(object):
    """
    Runs methods over one generated scene. Every run ends in a RunReport; failures are
    recorded in the report instead of propagating.
    """

    def __init__(self, experiment):
        self.experiment = experiment
        self.reports = []
        self.job_results = {}
        self.summaries = {}
        self._scene = None

    @property
    def scene(self):
        if self._scene is None:
            self._scene = generate_scene(self.experiment.scene)
        return self._scene

    def out_dir(self):
        return ensure_dir(os.path.join(self.experiment.out_dir, str(self.experiment.sequence)))

    def run_method(self, method, relinearize_skip=None):
        label = run_label(method, relinearize_skip)
        runner = build_runner(self.experiment, method, relinearize_skip)
        log.info('running {label} on {sequence}', label=label, sequence=self.experiment.sequence)
        dfd = defer.maybeDeferred(self._run, runner, label)
        dfd.addCallbacks(self.finished, self.failed, callbackArgs=(runner, label), errbackArgs=(runner, label))
        # a failure while assembling a successful report is still a failed run
        dfd.addErrback(self.failed, runner, label)
        reports = []
        dfd.addCallback(reports.append)
        self.summaries[label] = runner.summaries
        self.reports.append(reports[0])
        return reports[0]

    def _run(self, runner, label):
        gt, frames = self.scene
        for measurements in frames:
            runner.process_frame(measurements)
        runner.finish()
        camera_gt = dict(enumerate(gt.camera_poses))
        return evaluate(runner.camera_trajectory(), camera_gt, runner.frame_motions(), gt.frame_motions)

    def finished(self, metrics, runner, label):
        rows = []
        for formulation, estimate in runner.object_views():
            if isinstance(formulation, HybridFormulation):
                rows.extend(object_trajectory_rows(formulation, estimate, metrics.objects,
                                                   map_growth(estimate, formulation)))
        if not rows:
            rows = motion_error_rows(metrics.objects)
        log.info('{label}: {metrics!r}', label=label, metrics=metrics)
        return assemble_report(metrics, runner.stats(), sequence=self.experiment.sequence, method=label,
                               per_object=rows)

    def job_failed(self, message, runner, label):
        runner.close()
        self.job_results[label] = (FAILED, message)
        log.error('{label} failed: {message}', label=label, message=message)
        return assemble_report(None, runner.stats(), sequence=self.experiment.sequence, method=label,
                               status=FAILED, message=message)

    def failed(self, failure, runner, label):
        if failure.check(BudgetExceeded):
            ex = failure.value
            return self.job_failed('memory budget exhausted (%.1f MB > %.1f MB)'
                                   % (ex.required_mb, ex.budget_mb), runner, label)

        elif failure.check(RankDeficientError):
            return self.job_failed('rank deficient system at %s' % (failure.value.key,), runner, label)

        elif failure.check(InvalidConfig, UnknownKeyError, DuplicateKeyError, FrameMismatchError):
            return self.job_failed('invalid data: %s' % (failure.value,), runner, label)

        log.failure('{label}: unexpected failure', failure=failure, label=label)
        return self.job_failed('unexpected failure: %s' % (failure.getErrorMessage(),), runner, label)

    def write(self, reports):
        out = self.out_dir()
        for report in reports:
            report.write(out)
            if self.summaries.get(report.method):
                with open(os.path.join(out, 'graph_%s.csv' % report.method), 'w') as f:
                    write_summaries(self.summaries[report.method], f)
        with open(os.path.join(out, 'metrics.csv'), 'w') as f:
            write_metrics(reports, f)
        return out

    def run_experiment(self):
        """Run the configured method once. Returns the process exit status."""
        experiment = self.experiment
        report = self.run_method(experiment.method)
        out = self.write([report])
        if experiment.write_measurements:
            with open(os.path.join(out, 'measurements.csv'), 'w') as f:
                write_measurements(self.scene[1], f)
        log.info('{method} finished with status {status}; reports in {out}',
                 method=report.method, status=report.status, out=out)
        return 0 if report.status == OK else 1

    def run_suite(self):
        """
        Every suite method at every relinearize skip. Returns the accuracy rows, the timing
        rows and the rendered text.
        """
        skips = self.experiment.relinearize_skips
        runs = {}
        for method in SUITE_METHODS:
            if METHODS[method][1] == 'batch':
                runs[(method, None)] = self.run_method(method)
            else:
                for skip in skips:
                    runs[(method, skip)] = self.run_method(method, skip)
        accuracy = accuracy_rows(dict((m, runs.get((m, None)) or runs[(m, skips[0])]) for m in SUITE_METHODS))
        timing = timing_rows(runs, skips)
        text = render_suite(self.experiment.sequence, accuracy, timing, skips)

        out = self.write([runs[key] for key in sorted(runs, key=lambda k: (k[0], k[1] or 0))])
        with open(os.path.join(out, 'accuracy.csv'), 'w', encoding='utf-8') as f:
            write_table(accuracy, ACCURACY_FIELDS, f)
        with open(os.path.join(out, 'timing.csv'), 'w', encoding='utf-8') as f:
            write_table(timing, timing_fields(skips), f)
        with open(os.path.join(out, 'suite_report.txt'), 'w', encoding='utf-8') as f:
            f.write(text)
        return accuracy, timing, text


def accuracy_rows(reports):
    """Baseline in absolute values, every other method as baseline minus method."""
    baseline = reports['baseline']
    rows = []
    for method in SUITE_METHODS:
        report = reports[method]
        row = dict(method=method)
        for field in ACCURACY_FIELDS[1:]:
            if report.failed or (baseline.failed and method != 'baseline'):
                row[field] = FAILED_CELL
            elif method == 'baseline':
                row[field] = getattr(report.metrics, field)
            else:
                row[field] = getattr(baseline.metrics, field) - getattr(report.metrics, field)
        rows.append(row)
    return rows


def timing_fields(skips):
    return ('method',) + tuple('rs%d_ms' % s for s in skips)


def timing_rows(runs, skips):
    """Average per-frame smoother update time of the incremental methods."""
    rows = []
    for method in INCREMENTAL_METHODS:
        row = dict(method=method)
        for skip in skips:
            report = runs[(method, skip)]
            row['rs%d_ms' % skip] = FAILED_CELL if report.failed else report.avg_update_ms
        rows.append(row)
    return rows


def render_suite(sequence, accuracy, timing, skips):
    return '\n'.join([
        format_table(accuracy, ACCURACY_FIELDS,
                     title='%s: accuracy (baseline absolute, others baseline - method)' % (sequence,)),
        format_table(timing, timing_fields(skips), title='%s: average update time per frame' % (sequence,)),
    ])
