from fbs_workbench.base.exceptions import DomainError


class InsufficientDataError(DomainError):
    pass
