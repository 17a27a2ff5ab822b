"""
Root exception classes; each maps to a process exit code
"""


class ConfigError(Exception):
    """Invalid or unreadable run configuration."""

    exit_code = 2


class ResourceCapError(Exception):
    """A configured size cap would be exceeded."""

    exit_code = 3


class NumericalContractError(Exception):
    """A numerical guarantee (residual, norm, membership) was violated."""

    exit_code = 4
