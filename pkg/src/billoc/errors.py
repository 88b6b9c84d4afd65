"""Exception hierarchy shared by all modules."""


class BillocError(Exception):
    """Base class for every error raised by the package."""


class NumericalError(BillocError):
    """A numerical routine failed; the CLI maps these to exit code 3."""


class NoIntersection(NumericalError):
    pass


class TangentialLaunch(NumericalError):
    pass


class NotConverged(NumericalError):
    pass


class SeedInRegularRegion(NumericalError):
    pass


class MissingLevels(NumericalError):
    pass


class IllConditioned(NumericalError):
    pass


class PointOutsideDomain(BillocError, ValueError):
    pass


class DimensionMismatch(BillocError, ValueError):
    pass


class ParameterOutOfRange(BillocError, ValueError):
    pass


class InsufficientData(BillocError, ValueError):
    pass


class OptimizerNotConverged(NumericalError):
    def __init__(self, message, best=None, grad_norm=None):
        super().__init__(message)
        self.best = best
        self.grad_norm = grad_norm


class SampleOutOfRange(BillocError, ValueError):
    pass


class DegenerateFit(NumericalError):
    pass


class IncompleteWindow(NumericalError):
    pass


class ConfigError(BillocError):
    pass


class MissingArtifact(BillocError):
    pass


class StageFailed(BillocError):
    def __init__(self, stage, cause):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause
