"""Exception hierarchy shared across the package."""


class NeedlekitError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(NeedlekitError):
    """Invalid run configuration or malformed input file."""


class ExprSyntaxError(ConfigError):
    """Expression source failed to parse; carries the byte offset."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class UnknownIdentifier(ConfigError):
    """Expression references an identifier outside the grammar."""

    def __init__(self, name, offset):
        super().__init__(f"unknown identifier {name!r} (offset {offset})")
        self.name = name
        self.offset = offset


class InvalidDomain(ConfigError):
    """Polytope data violates a domain invariant."""


class InvalidN(NeedlekitError):
    """Dimension parameter N outside the admissible range."""


class EmptySample(NeedlekitError):
    """Discretization produced no points inside the domain."""


class DegenerateInstance(NeedlekitError):
    """Constraint function vanishes identically after recentering."""


class NumericalFailure(NeedlekitError):
    """Solver stalled or failed; never silently downgraded."""


class CertificateFailure(NeedlekitError):
    """A hard optimality or consistency certificate did not hold."""


class TooFewSamples(NeedlekitError):
    """Not enough ray members for a density estimate."""


class NonpositiveDensity(NeedlekitError):
    """Density not strictly positive where a log-density is required."""


class InvalidParams(NeedlekitError):
    """Parameters outside the admissible region of a needle family."""


class HypothesisViolated(NeedlekitError):
    """A pointwise or per-needle hypothesis of a checked inequality fails."""
