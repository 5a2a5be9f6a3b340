"""Exception types shared across the package."""


class DataFormatError(ValueError):
    """A dataset file is malformed (bad JSON, wrong frame shape, mixed joint counts)."""


class SplitError(ValueError):
    """A labeled/unlabeled split cannot satisfy its per-class constraints."""


class PoolSizeError(ValueError):
    """A neighbor query asked for more neighbors than the pool can provide."""


class ConfigError(ValueError):
    """An experiment configuration value is out of its documented range."""


class ContractError(ValueError):
    """Operands violate a documented shape or range contract."""


class NumericError(RuntimeError):
    """A forward pass or loss produced non-finite values; message names the component."""


class CheckpointError(ValueError):
    """A parameter archive is missing, truncated, or inconsistent with its sidecar."""
