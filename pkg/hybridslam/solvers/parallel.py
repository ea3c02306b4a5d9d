"""
Static graph plus one independent graph per dynamic object.

The static smoother is updated first. Its camera pose estimate and marginal covariance
enter every object graph as a prior on that graph's own copy of the pose. Object graphs
never feed back into the static graph. Object updates within a frame are independent of
each other and run on a thread pool, joined before the frame ends.
"""
import threading
from collections import defaultdict

from twisted.logger import Logger, LogLevel
from twisted.python.failure import Failure
from twisted.python.threadpool import ThreadPool
from zope.interface import implementer

from ..factors import FactorParams, NoiseModel, PosePriorFactor
from ..formulations import HybridFormulation
from ..interfaces import IRunner
from ..keys import Key, KeyKind
from ..values import Values
from .incremental import IncrementalParams, IncrementalSmoother

log = Logger()


class PriorRecord(object):
    """The camera prior currently held by one object graph for one frame."""

    def __init__(self, object_id, frame, index, mean, covariance):
        self.object_id = object_id
        self.frame = frame
        self.index = index
        self.mean = mean
        self.covariance = covariance

    def __repr__(self):
        return 'PriorRecord(object=%d, frame=%d, index=%d)' % (self.object_id, self.frame, self.index)


class ObjectGraph(object):
    """One dynamic object's formulation, smoother and current estimate."""

    def __init__(self, object_id, factor_params, incremental_params, min_points, embedded_offset=None):
        self.object_id = object_id
        self.formulation = HybridFormulation(
            factor_params, min_points, embedded_offset=embedded_offset,
            include_static=False, camera_owner=object_id, camera_factors=False)
        self.smoother = IncrementalSmoother(incremental_params, name='dofg%d' % object_id)
        self.estimate = Values()

    def update(self, measurements, camera_mean, camera_cov, replacements, records):
        """
        ``replacements`` maps frame -> (mean, covariance) for priors to refresh; ``records``
        are the matching PriorRecords. Returns the stats and the new prior indices.
        """
        k = measurements.frame
        factors = []
        values = Values()
        remove = []
        priors = []
        constrained = set()
        for frame in sorted(replacements):
            mean, cov = replacements[frame]
            remove.append(records[frame].index)
            key = Key.camera(frame, owner=self.object_id)
            priors.append((frame, len(factors), mean, cov))
            factors.append(PosePriorFactor(key, mean, NoiseModel.gaussian(cov)))

        if measurements.dynamic_obs.get(self.object_id):
            delta = self.formulation.process_frame(self.estimate, measurements, camera_pose=camera_mean)
            if delta.new_factors:
                camera_key = self.formulation.camera_key(k)
                priors.append((k, len(factors), camera_mean, camera_cov))
                factors.append(PosePriorFactor(camera_key, camera_mean, NoiseModel.gaussian(camera_cov)))
                factors.extend(delta.new_factors)
                values = delta.new_values
                constrained = delta.constrained_keys

        self.estimate, stats = self.smoother.update(factors, values, remove_indices=remove,
                                                    constrained_keys=constrained, frame=k)
        indices = self.smoother.new_factor_indices
        return stats._replace(object_id=self.object_id), [(f, indices[i], m, c) for f, i, m, c in priors]


@implementer(IRunner)
class ParallelRunner(object):

    def __init__(self, factor_params=None, incremental_params=None, min_points=3, initial_pose=None,
                 use_odometry=True, max_workers=0, embedded_offset=None):
        self.factor_params = factor_params or FactorParams()
        self.incremental_params = incremental_params or IncrementalParams()
        self.min_points = min_points
        self.embedded_offset = embedded_offset
        self.sfg_formulation = HybridFormulation(self.factor_params, min_points, initial_pose=initial_pose,
                                                 use_odometry=use_odometry)
        self.sfg = IncrementalSmoother(self.incremental_params, name='sfg')
        self.sfg_estimate = Values()
        self.dofgs = {}
        self.prior_registry = {}
        self.pending = defaultdict(dict)
        self.failed = {}
        self.sfg_stats = []
        self.object_stats = defaultdict(list)
        self.pool = None
        if max_workers:
            self.pool = ThreadPool(minthreads=0, maxthreads=max_workers, name='dofg')
            self.pool.start()

    def close(self):
        if self.pool is not None:
            self.pool.stop()
            self.pool = None

    def _graph(self, j):
        graph = self.dofgs.get(j)
        if graph is None:
            graph = ObjectGraph(j, self.factor_params, self.incremental_params, self.min_points,
                                self.embedded_offset)
            self.dofgs[j] = graph
        return graph

    def process_frame(self, measurements):
        return parallel_process_frame(self, measurements)

    def _run_all(self, tasks):
        """Run ``tasks`` (object_id -> callable) and wait for all of them."""
        results = {}
        if self.pool is None:
            for j in sorted(tasks):
                try:
                    results[j] = (True, tasks[j]())
                except Exception:
                    results[j] = (False, Failure())
            return results

        lock = threading.Lock()
        done = threading.Event()
        remaining = [len(tasks)]
        if not tasks:
            return results

        def finished(j, success, result):
            with lock:
                results[j] = (success, result)
                remaining[0] -= 1
                if not remaining[0]:
                    done.set()

        for j in sorted(tasks):
            self.pool.callInThreadWithCallback(
                lambda success, result, j=j: finished(j, success, result), tasks[j])
        done.wait()
        return results

    def estimate(self):
        merged = self.sfg_estimate.copy()
        for j in sorted(self.dofgs):
            merged.insert_all(self.dofgs[j].estimate)
        return merged

    def camera_trajectory(self):
        return self.sfg_formulation.camera_trajectory(self.sfg_estimate)

    def frame_motions(self):
        out = {}
        for j, graph in sorted(self.dofgs.items()):
            out.update(graph.formulation.frame_motions(graph.estimate))
        return out

    def object_map(self):
        out = {}
        for j, graph in sorted(self.dofgs.items()):
            out.update(graph.formulation.object_map(graph.estimate))
        return out

    def stats(self):
        return list(self.sfg_stats) + [s for j in sorted(self.object_stats) for s in self.object_stats[j]]


def parallel_process_frame(runner, measurements):
    """
    Update the static graph, then every visible object graph. Returns the merged estimate
    and the stats of every smoother updated in this frame.
    """
    k = measurements.frame
    delta = runner.sfg_formulation.process_frame(runner.sfg_estimate, measurements.static_only())
    runner.sfg_estimate, sfg_stats = runner.sfg.update(
        delta.new_factors, delta.new_values, constrained_keys=delta.constrained_keys, frame=k)
    runner.sfg_stats.append(sfg_stats)

    camera_key = runner.sfg_formulation.camera_key(k)
    mean = runner.sfg_estimate.at(camera_key)
    cov = runner.sfg.marginal_covariance(camera_key)
    propagate_relinearized_poses(runner, runner.sfg.relinearization_events())

    tasks = {}
    visible = set(j for j in measurements.object_ids() if j not in runner.failed)
    for j in sorted(visible | set(j for j in runner.pending if runner.pending[j] and j not in runner.failed)):
        graph = runner._graph(j)
        replacements = runner.pending.pop(j, {})
        records = dict((f, runner.prior_registry[(j, f)]) for f in replacements)
        obs = measurements.for_object(j)
        tasks[j] = (lambda graph=graph, obs=obs, replacements=replacements, records=records:
                    graph.update(obs, mean, cov, replacements, records))

    stats = [sfg_stats]
    for j, (success, result) in sorted(runner._run_all(tasks).items()):
        if not success:
            runner.failed[j] = k
            log.failure('object graph {object_id} failed at frame {frame}', failure=result,
                        level=LogLevel.error, object_id=j, frame=k)
            continue
        object_stats, priors = result
        for frame, index, m, c in priors:
            runner.prior_registry[(j, frame)] = PriorRecord(j, frame, index, m, c)
        runner.object_stats[j].append(object_stats)
        stats.append(object_stats)
    return runner.estimate(), stats


def propagate_relinearized_poses(runner, events):
    """
    Queue a prior refresh in every object graph holding a prior on a relinearized static
    camera pose. Returns the number of queued replacements.
    """
    queued = 0
    for key in events:
        if key.kind != KeyKind.CAMERA_POSE or key.object_id != 0:
            continue
        holders = [j for (j, frame) in runner.prior_registry if frame == key.frame]
        if not holders:
            continue
        mean = runner.sfg_estimate.at(key)
        cov = runner.sfg.marginal_covariance(key)
        for j in holders:
            if j in runner.failed:
                continue
            runner.pending[j][key.frame] = (mean, cov)
            queued += 1
    if queued:
        log.debug('queued {n} camera prior refreshes', n=queued)
    return queued
