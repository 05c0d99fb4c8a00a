"""Exception hierarchy. Each family maps onto one CLI exit code."""


class RydpairError(Exception):
    exit_code = 1


class ConfigError(RydpairError, ValueError):
    exit_code = 2

    def __init__(self, message, field=None, line=None):
        super().__init__(message)
        self.field = field
        self.line = line


class DataError(RydpairError):
    exit_code = 3


class MissingDataError(DataError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class OutOfValidityError(DataError, ValueError):
    pass


class NumericalError(RydpairError, ArithmeticError):
    exit_code = 4


class IntegrationError(NumericalError):
    pass


class ConsistencyError(NumericalError):
    pass


class ResourceError(RydpairError, MemoryError):
    exit_code = 5


class InsufficientDataError(DataError, ValueError):
    pass


class TrackingWarning(UserWarning):
    pass


class ResolutionWarning(UserWarning):
    pass
