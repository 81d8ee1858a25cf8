"""Exception hierarchy.

Every error carries a ``category`` used by the command line front end to pick
an exit code.
"""


class CausalTransportError(Exception):
    category = "error"


# scm-core
class ScmError(CausalTransportError):
    """Malformed SCM (non-total mechanism, bad normalization, cycle)."""

    category = "model"


class QueryError(CausalTransportError):
    category = "query"


class UndefinedConditionalError(QueryError):
    """Conditioning on an event of probability zero."""


class InvalidInterventionError(QueryError):
    pass


class EnumerationTooLargeError(CausalTransportError):
    category = "resource"


# transport-analysis
class TransportPairError(ScmError):
    pass


class BudgetExhaustedError(CausalTransportError):
    category = "verification"


class StructurallyIdentifiableError(CausalTransportError):
    """The requested graph admits no non-identifiability witness."""

    category = "verification"


# estimand
class StructureError(ScmError):
    pass


class DomainError(QueryError):
    pass


class EnumerationError(CausalTransportError):
    category = "query"


class PoolError(CausalTransportError):
    category = "query"


# neural
class ShapeError(CausalTransportError):
    category = "numeric"


class NumericError(CausalTransportError):
    category = "numeric"


class TrainingError(NumericError):
    def __init__(self, message, epoch=None):
        super().__init__(message if epoch is None else f"{message} (epoch {epoch})")
        self.epoch = epoch


class ClassCoverageError(CausalTransportError):
    category = "data"


class CheckpointError(CausalTransportError):
    category = "io"


# datasets
class SpecError(CausalTransportError):
    category = "config"


class CorruptFileError(CausalTransportError):
    category = "io"


class VersionError(CausalTransportError):
    category = "io"


# harness
class ConfigError(CausalTransportError):
    category = "config"
