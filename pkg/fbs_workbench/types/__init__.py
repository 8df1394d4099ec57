"""
Convenience imports to make all types available through one path. Applications should not import from
fbs_workbench.service, which holds the business logic, but rather use this point of entry instead.

Usage:
    from fbs_workbench.types.$MODULE import $TYPE

Example:
    from fbs_workbench.types.radio_sim import SimConfig
"""
