"""Exception hierarchy shared by all fedrd modules."""


class FedRDError(Exception):
    """Base class for every error raised by fedrd."""


class InvalidSpecError(FedRDError, ValueError):
    pass


class ShapeError(FedRDError, ValueError):
    pass


class DomainError(FedRDError, ValueError):
    pass


class ParameterError(FedRDError, ValueError):
    pass


class NumericError(FedRDError, ArithmeticError):
    def __init__(self, message, layer=None):
        super().__init__(message)
        self.layer = layer


class RangeError(FedRDError, ValueError):
    pass


class CorruptedAggregateError(FedRDError, ValueError):
    pass


class InsufficientPartiesError(FedRDError, ValueError):
    pass


class RingOverflowError(FedRDError, ValueError):
    pass


class IntegrityError(FedRDError, ValueError):
    pass


class ParseError(FedRDError, ValueError):
    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line


class GenerationError(FedRDError, ValueError):
    pass


class ProtocolInvariantError(FedRDError, RuntimeError):
    pass


class UndefinedMetricError(FedRDError, ValueError):
    pass


class ConfigError(FedRDError, ValueError):
    pass
