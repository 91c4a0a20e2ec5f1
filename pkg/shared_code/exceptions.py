class AfgError(Exception):
    """Base class for every error raised by the library"""


class ConfigurationError(AfgError, ValueError):
    pass


class ScopeError(AfgError, ValueError):
    pass


class InterventionError(AfgError, ValueError):
    pass


class UnknownIdentifierError(AfgError, LookupError):
    pass


class ComparisonError(AfgError, ValueError):
    pass


class InsufficientDataError(AfgError, ValueError):
    pass


class MisuseError(AfgError, ValueError):
    pass


class NoPlanError(AfgError, RuntimeError):
    """Raised when there is nothing left to try: no hypotheses and a maximal scope"""


class SelectionError(AfgError, ValueError):
    pass


class NoKeyError(AfgError, ValueError):
    pass


class InconsistentObservationsError(AfgError, RuntimeError):
    """No factor explains every observed state"""


class RemoteReasonerError(AfgError, RuntimeError):
    def __init__(self, message: str, retries: int):
        super().__init__(f"{message} (after {retries} retries)")
        self.retries = retries


class StatisticsError(AfgError, ValueError):
    pass


class DegenerateTestError(StatisticsError):
    pass


class ExportError(AfgError, OSError):
    pass
