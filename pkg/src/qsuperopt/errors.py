"""Exception hierarchy shared by every module.

The CLI maps :class:`DataError` subclasses to exit code 2 and
:class:`InvariantViolation` to exit code 3.
"""


class SuperoptError(Exception):
    """Base class for all package errors."""


class DataError(SuperoptError):
    """Bad input: configuration, schema, query text or plan."""


class ConfigError(DataError):
    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class SchemaError(DataError):
    pass


class SqlSyntaxError(DataError):
    def __init__(self, message, offset):
        self.offset = offset
        super().__init__(f"{message} at byte offset {offset}")


class PlanValidationError(DataError):
    pass


class PlanningError(DataError):
    pass


class EstimationError(DataError):
    pass


class CapacityError(DataError):
    pass


class TrainingError(DataError):
    pass


class DecodeError(DataError):
    pass


class WorkLimitExceeded(SuperoptError):
    """Raised by the engine when a plan's work passes the caller's cap."""

    def __init__(self, limit, work_so_far):
        self.limit = limit
        self.work_so_far = work_so_far
        super().__init__(f"work limit {limit} exceeded ({work_so_far} tuples)")


class InvariantViolation(SuperoptError):
    pass
