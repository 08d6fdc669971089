"""
Typed failures raised by the domain modules. The CLI maps `code` to the process exit status.
"""

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_GUARD = 3
EXIT_NUMERICAL = 4
EXIT_INTERNAL = 5


class LabError(Exception):
    code: int = EXIT_CONFIG


class ConfigError(LabError, ValueError):
    code = EXIT_CONFIG


class ScheduleError(ConfigError):
    """A coupling schedule fails the monotonicity or growth check."""


class GuardError(LabError, ValueError):
    code = EXIT_GUARD


class NumericalFailure(LabError, RuntimeError):
    code = EXIT_NUMERICAL


class DivergenceError(NumericalFailure):
    pass


class DomainViolation(NumericalFailure):
    """
    Input to the integral transform is outside its domain.
    :param index: offending grid index
    """

    def __init__(self, message: str, index: int):
        super().__init__(f"{message} (grid index {index})")
        self.index = index


class ContractViolation(LabError, AssertionError):
    """A caller broke a documented precondition."""
