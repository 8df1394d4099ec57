from fbs_workbench.base.exceptions import ConfigError


class TopologyCoverageError(ConfigError):
    """
    A reported neighbor PCI has no entry in the topology
    """

    pass
