class HybridSlamError(Exception):
    """
    Base class for every error raised by hybridslam
    """
    pass


class InvalidConfig(HybridSlamError):
    """
    When a scene or experiment configuration violates its invariants
    """
    pass


class UnknownKeyError(HybridSlamError, KeyError):
    """
    When a factor or a query references a variable that does not exist
    """

    def __init__(self, key, message=None):
        self.key = key
        super(UnknownKeyError, self).__init__(message or 'Unknown variable key: %s' % (key,))

    def __str__(self):
        return self.args[0]


class DuplicateKeyError(HybridSlamError):
    """
    When a variable is inserted twice
    """

    def __init__(self, key):
        self.key = key
        super(DuplicateKeyError, self).__init__('Variable already exists: %s' % (key,))


class RankDeficientError(HybridSlamError):
    """
    When elimination meets a variable the factors do not constrain (missing prior/gauge)
    """

    def __init__(self, key, message=None):
        self.key = key
        super(RankDeficientError, self).__init__(
            message or 'Indeterminant linear system while eliminating %s' % (key,))


class BudgetExceeded(HybridSlamError):
    """
    When the Bayes tree needs more memory than the configured budget
    """

    def __init__(self, required_mb, budget_mb):
        self.required_mb = required_mb
        self.budget_mb = budget_mb
        super(BudgetExceeded, self).__init__(
            'Bayes tree needs %.1f MB, budget is %.1f MB' % (required_mb, budget_mb))


class UnknownObjectError(HybridSlamError):
    def __repr__(self):
        return 'The requested object or frame is not known.'


class FrameMismatchError(HybridSlamError):
    def __repr__(self):
        return 'Estimated and reference trajectories do not cover the same frames.'
