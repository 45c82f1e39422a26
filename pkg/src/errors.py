"""Exception hierarchy for tenslet."""


class TensletError(Exception):
    """Base class for all library errors."""


class DomainError(TensletError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class PoleError(DomainError):
    """Tangent frame requested at (or within tolerance of) a pole."""


class ShapeError(TensletError, ValueError):
    """Sample count or array shape does not match the rule or coefficient set."""


class FormatError(TensletError):
    """Malformed text or binary input."""


class VersionError(FormatError):
    """File format version is not supported."""


class ResourceError(TensletError):
    """Request exceeds what the node solver or the memory guard allows."""


class ConfigurationError(TensletError):
    """Inconsistent scheme, rule, bank or command-line configuration."""


class ContractError(TensletError):
    """Operation precondition violated by the caller."""


class CertificateError(ContractError):
    """Input sequence is not a certified bandlimited sequence."""
