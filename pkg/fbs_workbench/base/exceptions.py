class WorkbenchError(Exception):
    """
    Root of the errors the command line turns into exit codes
    """

    exit_code: int = 1

    def __init__(self, message: str, stage: str | None = None) -> None:
        super().__init__(message)
        self.stage = stage


class ConfigError(WorkbenchError):
    exit_code = 2


class DependencyError(WorkbenchError):
    """
    An upstream artifact (reports, features, models) is missing
    """

    exit_code = 3


class NumericalError(WorkbenchError):
    exit_code = 4


class DomainError(ValueError):
    """
    Invalid argument to a pure operation, i.e. a non-positive distance
    """

    pass
