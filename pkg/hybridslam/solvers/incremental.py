"""
Incremental smoothing on a Bayes tree with fluid relinearization.

Every update detaches the cliques touched by new or removed factors and by relinearized
variables, together with their paths to the root, re-eliminates that top part with the
recently affected variables ordered last, reattaches the untouched subtrees through their
cached factors and back-substitutes over the whole tree.
"""
import time
from typing import NamedTuple

import numpy as np
from twisted.logger import Logger
from zope.interface import implementer

from ..exceptions import BudgetExceeded, DuplicateKeyError, InvalidConfig, UnknownKeyError
from ..graph import (
    BayesTree, FactorGraph, clique_stats, compute_ordering, eliminate_into, marginal_covariance,
    solve)
from ..interfaces import ISmoother
from ..values import Values

log = Logger()

_MB = 1024.0 * 1024.0


class IncrementalParams(object):
    """
    ``relinearize_skip`` is the fluid relinearization gate: thresholds are only checked on
    updates whose 0-based index is a multiple of it.
    """

    def __init__(self, relinearize_skip=1, pose_threshold=0.1, point_threshold=0.05, budget_mb=None):
        if int(relinearize_skip) < 1:
            raise InvalidConfig('relinearize_skip must be >= 1, got %r' % (relinearize_skip,))
        if pose_threshold <= 0.0 or point_threshold <= 0.0:
            raise InvalidConfig('relinearization thresholds must be positive')
        if budget_mb is not None and budget_mb <= 0.0:
            raise InvalidConfig('budget_mb must be positive, got %r' % (budget_mb,))
        self.relinearize_skip = int(relinearize_skip)
        self.pose_threshold = pose_threshold
        self.point_threshold = point_threshold
        self.budget_mb = budget_mb

    @classmethod
    def from_config(cls, config, **overrides):
        section = 'incremental'
        budget = config.getfloat('budget_mb', 0.0, section=section)
        params = dict(
            relinearize_skip=config.getint('relinearize_skip', 1, section=section),
            pose_threshold=config.getfloat('pose_threshold', 0.1, section=section),
            point_threshold=config.getfloat('point_threshold', 0.05, section=section),
            budget_mb=budget or None,
        )
        params.update((k, v) for k, v in overrides.items() if v is not None)
        return cls(**params)

    def threshold(self, key):
        return self.pose_threshold if key.is_pose else self.point_threshold


class SmootherStats(NamedTuple):
    frame: int
    wall_ms: float
    reelim_vars: int
    max_clique: int
    avg_clique: float
    relinearized: int
    total_vars: int
    max_clique_vars: int = 0
    avg_clique_vars: float = 0.0
    num_cliques: int = 0
    object_id: int = 0


@implementer(ISmoother)
class IncrementalSmoother(object):

    def __init__(self, params=None, name='smoother'):
        self.params = params or IncrementalParams()
        self.name = name
        self.graph = FactorGraph()
        self.theta = Values()
        self.delta = {}
        self.tree = BayesTree()
        self.update_index = 0
        self.new_factor_indices = []
        self.last_reeliminated = []
        self._last_relinearized = []

    def _check_new(self, new_factors, new_values):
        for key in new_values:
            if key in self.theta:
                raise DuplicateKeyError(key)
        for factor in new_factors:
            for key in factor.keys:
                if key not in self.theta and key not in new_values:
                    raise UnknownKeyError(key, 'Factor %r references unknown variable %s' % (factor, key))

    def _relinearize(self):
        if self.update_index % self.params.relinearize_skip:
            return []
        keys = []
        for key in sorted(self.delta):
            if np.linalg.norm(self.delta[key]) <= self.params.threshold(key):
                continue
            # a variable only touched by linear factors has nothing to relinearize
            if all(self.graph[i].linear for i in self.graph.factors_of(key)):
                continue
            keys.append(key)
        for key in keys:
            self.theta.update(key, self.theta.retract({key: self.delta[key]}).at(key))
            self.delta[key] = np.zeros(key.dim)
        return keys

    def update(self, new_factors=(), new_values=None, remove_indices=(), constrained_keys=None, frame=None):
        started = time.perf_counter()
        new_factors = list(new_factors)
        new_values = new_values if new_values is not None else Values()
        self._check_new(new_factors, new_values)

        for key, value in new_values.items():
            self.theta.insert(key, value)
            self.delta[key] = np.zeros(key.dim)

        affected = set(new_values.keys())
        for index in remove_indices:
            affected.update(self.graph.remove(index).keys)
        self.new_factor_indices = self.graph.add_all(new_factors)
        observed = set()
        for factor in new_factors:
            observed.update(factor.keys)
        affected |= observed

        relinearized = self._relinearize()
        for key in relinearized:
            affected.add(key)
            for index in self.graph.factors_of(key):
                affected.update(self.graph[index].keys)

        removed, orphans = self.tree.remove_top(sorted(affected))
        top = set(affected)
        for clique in removed:
            top.update(clique.frontals)
        # variables whose last factor was removed drop out of the problem
        for key in sorted(top):
            if key not in self.graph:
                top.discard(key)
                self.delta.pop(key, None)
                self.theta.pop(key)

        indices = set()
        for key in top:
            indices.update(self.graph.factors_of(key))
        linear = [self.graph[i].linearize(self.theta)
                  for i in sorted(indices) if all(k in top for k in self.graph[i].keys)]
        linear.extend(orphan.cached for orphan in orphans)

        constrained = observed if constrained_keys is None else set(constrained_keys)
        ordering = compute_ordering([f.keys for f in linear], constrained_last=constrained & top, keys=top)
        created = eliminate_into(self.tree, linear, ordering, updated_at=self.update_index)
        for orphan in orphans:
            first = min(orphan.separator, key=ordering.position.__getitem__)
            self.tree.attach(orphan, self.tree.clique_of[first])

        if self.params.budget_mb is not None:
            required = self.tree.nbytes() / _MB
            if required > self.params.budget_mb:
                raise BudgetExceeded(required, self.params.budget_mb)

        self.delta.update(solve(self.tree))
        self.last_reeliminated = [k for c in created for k in c.frontals]
        self._last_relinearized = relinearized

        sizes = clique_stats(self.tree)
        stats = SmootherStats(
            frame=self.update_index if frame is None else frame,
            wall_ms=1000.0 * (time.perf_counter() - started),
            reelim_vars=len(self.last_reeliminated),
            max_clique=sizes['max_clique_size'],
            avg_clique=sizes['avg_clique_size'],
            relinearized=len(relinearized),
            total_vars=len(self.theta),
            max_clique_vars=sizes['max_clique_vars'],
            avg_clique_vars=sizes['avg_clique_vars'],
            num_cliques=sizes['num_cliques'],
        )
        log.debug('{name} update {index}: re-eliminated {reelim} of {total}, relinearized {relin}',
                  name=self.name, index=self.update_index, reelim=stats.reelim_vars,
                  total=stats.total_vars, relin=stats.relinearized)
        self.update_index += 1
        return self.calculate_estimate(), stats

    def calculate_estimate(self):
        return self.theta.retract(self.delta)

    def relinearization_events(self):
        return list(self._last_relinearized)

    def marginal_covariance(self, key):
        return marginal_covariance(self.tree, key)

    def error(self):
        return self.graph.error(self.calculate_estimate())

    def __repr__(self):
        return 'IncrementalSmoother(%s, %d variables)' % (self.name, len(self.theta))
