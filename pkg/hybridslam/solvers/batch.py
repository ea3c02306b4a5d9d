"""
Full-batch Levenberg-Marquardt over the whole factor graph.
"""
import math
import time

import numpy as np
from twisted.logger import Logger

from ..exceptions import InvalidConfig
from ..factors import LinearFactor
from ..graph import clique_stats, compute_ordering, eliminate, solve

log = Logger()


class BatchParams(object):

    def __init__(self, max_iterations=100, initial_lambda=1e-5, lambda_up=10.0, lambda_down=10.0,
                 absolute_tolerance=1e-12, relative_tolerance=1e-10, max_lambda=1e10):
        self.max_iterations = max_iterations
        self.initial_lambda = initial_lambda
        self.lambda_up = lambda_up
        self.lambda_down = lambda_down
        self.absolute_tolerance = absolute_tolerance
        self.relative_tolerance = relative_tolerance
        self.max_lambda = max_lambda
        for name, value in vars(self).items():
            if not value > 0:
                raise InvalidConfig('batch parameter %s must be positive, got %r' % (name, value))

    @classmethod
    def from_config(cls, config):
        section = 'batch'
        return cls(
            max_iterations=config.getint('max_iterations', 100, section=section),
            initial_lambda=config.getfloat('initial_lambda', 1e-5, section=section),
            lambda_up=config.getfloat('lambda_up', 10.0, section=section),
            lambda_down=config.getfloat('lambda_down', 10.0, section=section),
            absolute_tolerance=config.getfloat('absolute_tolerance', 1e-12, section=section),
            relative_tolerance=config.getfloat('relative_tolerance', 1e-10, section=section),
        )


class LevenbergMarquardt(object):
    """
    Damped Gauss-Newton with identity damping added as extra whitened rows. The ordering is
    computed once; every iteration eliminates into a fresh Bayes tree.
    """

    def __init__(self, graph, initial, params=None, ordering=None):
        self.graph = graph
        self.values = initial.copy()
        self.params = params or BatchParams()
        self.ordering = ordering or compute_ordering(graph)
        self.iterations = 0
        self.costs = []
        self.wall_time = 0.0

    def _damped(self, linear, lam):
        root = math.sqrt(lam)
        damping = [LinearFactor((key,), [root * np.eye(key.dim)], np.zeros(key.dim))
                   for key in self.ordering]
        return linear + damping

    def optimize(self):
        started = time.perf_counter()
        p = self.params
        values = self.values
        cost = self.graph.error(values)
        self.costs = [cost]
        lam = p.initial_lambda

        linear = self.graph.linearize(values)
        # undamped probe, surfaces an unconstrained variable by name
        eliminate(linear, self.ordering)

        while self.iterations < p.max_iterations and cost > p.absolute_tolerance:
            self.iterations += 1
            tree = eliminate(self._damped(linear, lam), self.ordering)
            candidate = values.retract(solve(tree))
            new_cost = self.graph.error(candidate)
            log.debug('lm iteration {i}: lambda {lam:.1e} cost {cost:.6e} -> {new:.6e}',
                      i=self.iterations, lam=lam, cost=cost, new=new_cost)
            if new_cost <= cost:
                decrease = cost - new_cost
                values, cost = candidate, new_cost
                self.costs.append(cost)
                lam = max(lam / p.lambda_down, 1e-12)
                if decrease <= p.absolute_tolerance or decrease <= p.relative_tolerance * cost:
                    break
                linear = self.graph.linearize(values)
            else:
                lam *= p.lambda_up
                if lam > p.max_lambda:
                    log.debug('lm stopped: lambda {lam:.1e} exceeds the limit', lam=lam)
                    break

        self.values = values
        self.wall_time = time.perf_counter() - started
        return values, cost

    def final_tree(self):
        """Undamped elimination at the current values, for structure and marginals."""
        return eliminate(self.graph.linearize(self.values), self.ordering)

    def stats(self):
        stats = clique_stats(self.final_tree())
        stats.update(iterations=self.iterations, wall_ms=1000.0 * self.wall_time,
                     total_vars=len(self.ordering))
        return stats


def batch_solve(graph, initial, params=None):
    """Returns the MAP estimate and its cost."""
    return LevenbergMarquardt(graph, initial, params).optimize()
