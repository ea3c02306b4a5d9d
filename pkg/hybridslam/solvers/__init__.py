from .batch import BatchParams, LevenbergMarquardt, batch_solve
from .incremental import IncrementalParams, IncrementalSmoother, SmootherStats

__all__ = [
    'BatchParams', 'LevenbergMarquardt', 'batch_solve',
    'IncrementalParams', 'IncrementalSmoother', 'SmootherStats',
]
