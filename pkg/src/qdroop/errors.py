"""Exception hierarchy shared across the library.

Analysis verdicts (unstable, condition fails) are returned as values, never
raised. Exceptions are reserved for invalid inputs, violated model
hypotheses, and numerical failures.
"""


class MicrogridError(Exception):
    """Base class for all library-specific errors."""


class ModelError(MicrogridError):
    """Network description violates a structural requirement."""


class DisconnectedNetworkError(ModelError):
    """Bus graph is not connected; carries the offending components."""

    def __init__(self, components):
        self.components = [sorted(c) for c in components]
        parts = "; ".join(str(c) for c in self.components)
        super().__init__(f"network graph is disconnected: components {parts}")


class NetworkFileError(MicrogridError):
    """Network file failed to parse or validate; carries all messages."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid network file:\n  " + "\n  ".join(self.errors))


class HypothesisError(MicrogridError):
    """A solvability or optimality hypothesis does not hold for this input."""


class CapacitiveLoadError(HypothesisError):
    """Shunt loading destroys the M-matrix structure of the reduced network."""


class InductiveCurrentError(HypothesisError):
    """Constant-current draw exceeds what the network can source."""


class HeavyLoadingError(MicrogridError):
    """Constant-power loading is outside the perturbative regime."""


class VoltageCollapseError(MicrogridError):
    """No high-voltage operating point exists for the requested loading."""


class NonconvergenceError(MicrogridError):
    """An iterative solver exhausted its budget without converging."""


class IllConditionedError(MicrogridError):
    """A matrix is too badly conditioned for a trustworthy solve."""


class AlgebraicSingularityError(MicrogridError):
    """The algebraic block of a linearization is singular (bifurcation point)."""


class InternalConsistencyError(MicrogridError):
    """A guaranteed internal property failed; indicates a bug, not bad input."""
