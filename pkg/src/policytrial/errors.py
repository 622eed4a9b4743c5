"""Exception hierarchy shared by every module."""


class PolicyTrialError(Exception):
    """Base class for all package errors."""


class InputError(PolicyTrialError):
    """Bad or inconsistent user input (files, flags, configs)."""


class ParseError(InputError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class DuplicateObservation(ParseError):
    pass


class InvalidCount(ParseError):
    pass


class DuplicateUnit(ParseError):
    pass


class EmptyInput(InputError):
    pass


class UnknownUnit(InputError):
    """A unit has outcome data but no entry in the treatment schedule."""


class MissingSeries(InputError):
    pass


class TimeModeMismatch(InputError):
    pass


class ConfigError(InputError):
    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class EstimationError(PolicyTrialError):
    """Raised when an estimator cannot produce a value from the data given."""


class NoTreatedUnits(EstimationError):
    pass


class EmptyComparisonPool(EstimationError):
    pass


class NoData(EstimationError):
    def __init__(self, message="no defined observations", cell=None):
        self.cell = cell
        super().__init__(f"{cell}: {message}" if cell else message)


class MissingReference(EstimationError):
    pass


class InferenceUnavailable(EstimationError):
    pass
