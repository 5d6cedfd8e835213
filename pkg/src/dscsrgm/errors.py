"""Exception hierarchy shared by all modules."""


class DscError(Exception):
    """Base class for every error raised by this package."""


class ParseError(DscError):
    pass


class ValidationError(DscError):
    pass


class TooShort(DscError):
    pass


class DomainError(DscError):
    pass


class AllFitsFailed(DscError):
    pass


class GenerationStalled(DscError):
    pass


class Undefined(DscError):
    """Cross-correlation is not defined at the requested lag."""


class NoValidLag(DscError):
    pass


class NoTrainingData(DscError):
    pass


class NonFiniteLoss(DscError):
    pass


class MapeUndefined(DscError):
    def __init__(self, indices):
        self.indices = list(indices)
        super().__init__(f"MAPE undefined: actual value is zero at indices {self.indices}")


class AllZeroDifferences(DscError):
    pass


class DegenerateRanks(DscError):
    pass


class ConfigError(DscError):
    pass
