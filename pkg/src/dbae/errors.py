"""Exception types. The CLI maps these families onto exit codes."""


class DbaeError(Exception):
    pass


class DomainError(DbaeError, ValueError):
    """A time argument lies outside the schedule's [0, T]."""


class SingularityError(DbaeError, ValueError):
    """Evaluation too close to an endpoint where the bridge degenerates."""


class ShapeError(DbaeError, ValueError):
    pass


class ContractError(DbaeError, ValueError):
    """A caller violated an operation's precondition."""


class NumericFault(DbaeError, FloatingPointError):
    """NaN or Inf appeared during training or sampling."""


class DegenerateLatentError(DbaeError, ValueError):
    pass


class ConfigError(DbaeError, ValueError):
    pass


class DataError(DbaeError, ValueError):
    pass


class MagicError(DataError):
    pass


class TruncationError(DataError):
    pass


class RaggedCsvError(DataError):
    pass


class CheckpointError(DataError):
    pass


class VersionError(CheckpointError):
    pass


class ManifestError(CheckpointError):
    pass
