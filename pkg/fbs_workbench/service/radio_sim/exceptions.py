from fbs_workbench.base.exceptions import ConfigError


class UnknownCellError(ConfigError):
    pass


class ScriptError(ConfigError):
    pass
