# -*- coding: utf-8 -*-
"""
Experiment assembly: the typed experiment description and the runners that feed frames
through a formulation and a solver.
"""
from twisted.logger import Logger
from zope.interface import implementer

from .exceptions import InvalidConfig
from .factors import FactorParams
from .formulations import FORMULATIONS
from .graph import FactorGraph
from .interfaces import IRunner
from .sim import SceneConfig, load_preset, load_scene
from .solvers import BatchParams, IncrementalParams, IncrementalSmoother, LevenbergMarquardt, SmootherStats
from .solvers.parallel import ParallelRunner
from .values import Values

log = Logger()

SOLVERS = ('batch', 'incremental', 'parallel')

# method label -> (formulation, solver)
METHODS = {
    'baseline': ('baseline', 'batch'),
    'hybrid': ('hybrid', 'batch'),
    'ibaseline': ('baseline', 'incremental'),
    'ihybrid': ('hybrid', 'incremental'),
    'parallel-hybrid': ('hybrid', 'parallel'),
}
SUITE_METHODS = ('baseline', 'hybrid', 'ihybrid', 'ibaseline', 'parallel-hybrid')


def method_name(formulation, solver):
    for name, pair in METHODS.items():
        if pair == (formulation, solver):
            return name
    raise InvalidConfig('No method for formulation %r with solver %r' % (formulation, solver))


class ExperimentConfig(object):

    def __init__(self, scene, formulation='hybrid', solver='batch', factor_params=None, batch_params=None,
                 incremental_params=None, min_points=3, use_odometry=True, max_workers=0, out_dir='results',
                 sequence='scene', relinearize_skips=(1, 10), write_measurements=False):
        self.scene = scene
        self.formulation = formulation
        self.solver = solver
        self.factor_params = factor_params or FactorParams()
        self.batch_params = batch_params or BatchParams()
        self.incremental_params = incremental_params or IncrementalParams()
        self.min_points = int(min_points)
        self.use_odometry = use_odometry
        self.max_workers = int(max_workers)
        self.out_dir = out_dir
        self.sequence = sequence
        self.relinearize_skips = tuple(int(s) for s in relinearize_skips)
        self.write_measurements = write_measurements

    def validate(self):
        if self.formulation not in FORMULATIONS:
            raise InvalidConfig('Unknown formulation %r, expected one of %s'
                                % (self.formulation, ', '.join(sorted(FORMULATIONS))))
        if self.solver not in SOLVERS:
            raise InvalidConfig('Unknown solver %r, expected one of %s' % (self.solver, ', '.join(SOLVERS)))
        if self.solver == 'parallel' and self.formulation != 'hybrid':
            raise InvalidConfig('The parallel solver requires the hybrid formulation')
        if self.min_points < 1:
            raise InvalidConfig('min_points must be >= 1, got %d' % self.min_points)
        if self.max_workers < 0:
            raise InvalidConfig('max_workers must be >= 0, got %d' % self.max_workers)
        if not self.relinearize_skips or min(self.relinearize_skips) < 1:
            raise InvalidConfig('relinearize_skips must be positive, got %r' % (self.relinearize_skips,))
        self.scene.validate()
        return self

    @property
    def method(self):
        return method_name(self.formulation, self.solver)

    @classmethod
    def from_config(cls, config):
        """
        The scene comes from ``scene_file``, a non-empty ``scene`` section or the named
        ``preset``, in that order. ``seed`` overrides the scene's own seed.
        """
        seed = config.get('seed')
        seed = None if seed is None else int(seed)
        scene_file = config.get('scene_file')
        preset = config.get('preset')
        if scene_file:
            scene = load_scene(scene_file, seed=seed)
            sequence = config.get('sequence', scene_file)
        elif config.items('scene'):
            scene = SceneConfig.from_dict(config.items('scene'), seed=seed)
            sequence = config.get('sequence', 'scene')
        elif preset:
            scene = SceneConfig.from_dict(load_preset(preset).get('scene'), seed=seed)
            sequence = config.get('sequence', preset)
        else:
            raise InvalidConfig('No scene: give a scene file, a scene section or a preset')
        return cls(
            scene=scene,
            formulation=config.get('formulation', 'hybrid'),
            solver=config.get('solver', 'batch'),
            factor_params=FactorParams.from_config(config),
            batch_params=BatchParams.from_config(config),
            incremental_params=IncrementalParams.from_config(config),
            min_points=config.getint('min_points', 3, section='formulation'),
            use_odometry=config.getboolean('use_odometry', True, section='formulation'),
            max_workers=config.getint('max_workers', 0, section='parallel'),
            out_dir=config.get('out_dir', 'results', section='output'),
            sequence=sequence,
            relinearize_skips=config.getlist('relinearize_skips', [1, 10], section='output'),
            write_measurements=config.getboolean('write_measurements', False, section='output'),
        ).validate()


class _FormulationRunner(object):
    """Shared accessors for runners driving a single formulation."""

    def __init__(self, formulation):
        self.formulation = formulation
        self.summaries = []
        self._stats = []

    def camera_trajectory(self):
        return self.formulation.camera_trajectory(self.estimate())

    def frame_motions(self):
        return self.formulation.frame_motions(self.estimate())

    def object_views(self):
        return [(self.formulation, self.estimate())]

    def stats(self):
        return list(self._stats)

    def finish(self):
        pass

    def close(self):
        pass


@implementer(IRunner)
class BatchRunner(_FormulationRunner):
    """Accumulates the whole graph and solves it once, in ``finish``."""

    def __init__(self, formulation, params=None):
        super(BatchRunner, self).__init__(formulation)
        self.params = params or BatchParams()
        self.graph = FactorGraph()
        self.initial = Values()
        self.values = None
        self.last_frame = None

    def process_frame(self, measurements):
        delta = self.formulation.process_frame(self.initial, measurements)
        self.graph.add_all(delta.new_factors)
        self.initial.insert_all(delta.new_values)
        self.summaries.append(delta.summary())
        self.last_frame = measurements.frame

    def finish(self):
        lm = LevenbergMarquardt(self.graph, self.initial, self.params)
        self.values, cost = lm.optimize()
        s = lm.stats()
        self._stats.append(SmootherStats(
            frame=self.last_frame, wall_ms=s['wall_ms'], reelim_vars=s['total_vars'],
            max_clique=s['max_clique_size'], avg_clique=s['avg_clique_size'], relinearized=s['total_vars'],
            total_vars=s['total_vars'], max_clique_vars=s['max_clique_vars'],
            avg_clique_vars=s['avg_clique_vars'], num_cliques=s['num_cliques']))
        log.info('batch {name}: {iterations} iterations, final cost {cost:.6e}',
                 name=self.formulation.name, iterations=lm.iterations, cost=cost)
        return self.values

    def estimate(self):
        return self.values if self.values is not None else self.initial


@implementer(IRunner)
class IncrementalRunner(_FormulationRunner):

    def __init__(self, formulation, params=None):
        super(IncrementalRunner, self).__init__(formulation)
        self.smoother = IncrementalSmoother(params, name=formulation.name)
        self.values = Values()

    def process_frame(self, measurements):
        delta = self.formulation.process_frame(self.values, measurements)
        self.summaries.append(delta.summary())
        self.values, stats = self.smoother.update(delta.new_factors, delta.new_values,
                                                  constrained_keys=delta.constrained_keys,
                                                  frame=measurements.frame)
        self._stats.append(stats)
        return self.values, stats

    def estimate(self):
        return self.values


class ParallelHybridRunner(ParallelRunner):
    """ParallelRunner with the accessors the launcher expects."""

    summaries = ()

    def object_views(self):
        return [(g.formulation, g.estimate) for _, g in sorted(self.dofgs.items())]

    def finish(self):
        self.close()


def build_runner(experiment, method=None, relinearize_skip=None):
    formulation_name, solver = METHODS[method] if method else (experiment.formulation, experiment.solver)
    params = experiment.incremental_params
    if relinearize_skip is not None:
        params = IncrementalParams(relinearize_skip, params.pose_threshold, params.point_threshold,
                                   params.budget_mb)
    initial_pose = experiment.scene.first_camera_pose()
    if solver == 'parallel':
        if formulation_name != 'hybrid':
            raise InvalidConfig('The parallel solver requires the hybrid formulation')
        return ParallelHybridRunner(experiment.factor_params, params, experiment.min_points,
                                    initial_pose=initial_pose, use_odometry=experiment.use_odometry,
                                    max_workers=experiment.max_workers)
    formulation = FORMULATIONS[formulation_name](experiment.factor_params, experiment.min_points,
                                                 initial_pose=initial_pose, use_odometry=experiment.use_odometry)
    if solver == 'batch':
        return BatchRunner(formulation, experiment.batch_params)
    return IncrementalRunner(formulation, params)
