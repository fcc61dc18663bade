"""Exception and warning types shared across the package."""


class SpectralWeightError(Exception):
    """Base class for all package errors."""


class MeshParseError(SpectralWeightError):
    """Malformed OBJ input. ``lineno`` is 1-based."""

    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class StructuralError(SpectralWeightError):
    """Mesh topology violates an operation's precondition."""


class NumericalError(SpectralWeightError):
    """A numerical routine failed (degenerate geometry, non-convergence)."""


class ContractError(SpectralWeightError):
    """Persisted artifact is incompatible with the requested operation."""


class VersionError(ContractError):
    """Persisted artifact is corrupt or has an unknown format version."""


class ArgumentError(SpectralWeightError, ValueError):
    """Invalid argument value."""


class MeshWarning(UserWarning):
    """Result computed, but on a mesh that does not meet the ideal precondition."""


class SimplificationWarning(MeshWarning):
    """Edge collapse stopped before reaching the requested vertex count."""
