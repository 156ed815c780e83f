"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class AsropsError(Exception):
    exit_code = 1


class UsageError(AsropsError, ValueError):
    exit_code = 1


class DataError(AsropsError, ValueError):
    exit_code = 2


class ResourceError(AsropsError):
    exit_code = 3


class RoutingError(DataError):
    """A query length that no executor in the pool can hold."""
