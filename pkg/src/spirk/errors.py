"""Exception types shared across the solver kit."""


class ConfigurationError(ValueError):
    """A run or grid configuration violates a precondition."""


class DimensionMismatchError(ValueError):
    """Vector or matrix sizes are inconsistent."""


class UnsupportedStageCountError(ConfigurationError):
    """Stage count outside the supported range 1..9."""


class FactorizationError(RuntimeError):
    """LU factorization hit a zero pivot."""

    def __init__(self, pivot_index, message=None):
        self.pivot_index = pivot_index
        super().__init__(message or f"zero pivot at index {pivot_index}")


class DegenerateSpectrumError(RuntimeError):
    """Two eigenvalues too close for a stable eigenvector solve."""


class SpectralFailureError(RuntimeError):
    """Eigenvalue iteration did not converge or produced an invalid estimate."""


class NumericalFailureError(RuntimeError):
    """A non-finite value was produced where finite values are required."""

    def __init__(self, message, level=None):
        self.level = level
        super().__init__(message)


class ProtocolError(RuntimeError):
    """A simulated rank waits on a collective no peer will join."""

    def __init__(self, message, ranks=()):
        self.ranks = tuple(ranks)
        super().__init__(message)


class CollectiveContractError(ProtocolError):
    """Collective call with mismatched participants or payload shapes."""


class UnsupportedTopologyError(ConfigurationError):
    """Operation requires a topology the rank grid does not provide."""


class StepFailureError(RuntimeError):
    """A time step's linear solve did not converge; carries the report."""

    def __init__(self, message, report=None):
        self.report = report
        super().__init__(message)


class ValidationFailureError(RuntimeError):
    """Performance-model validation found mismatched quantities."""

    def __init__(self, mismatches):
        self.mismatches = list(mismatches)
        super().__init__("; ".join(str(m) for m in self.mismatches))
