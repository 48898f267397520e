"""Exception types shared across the package.

Exit-code mapping lives in the CLI: bound violations exit 2, integration
failures exit 3, configuration problems exit 4.
"""


class SimulationError(Exception):
    """Base class for everything raised by this package."""


class InvalidParameterError(SimulationError):
    """A constructor or operation argument violates its precondition."""


class WrongPictureError(SimulationError):
    """Operation requires the other picture (interaction vs schrodinger)."""


class IntegrationDivergedError(SimulationError):
    """An invariant left tolerance mid-run."""

    def __init__(self, invariant, time, value, detail=""):
        self.invariant = invariant
        self.time = time
        self.value = value
        msg = f"{invariant} violated at t={time:.6g} (value {value:.3e})"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class BoundaryError(SimulationError):
    """Population reached the edge of the momentum lattice."""


class NonPhysicalStateError(SimulationError):
    """State failed positivity/Hermiticity beyond the noise threshold."""


class InvalidKindError(SimulationError):
    """Phase-space field of the wrong kind for this operation."""


class UseShannonError(InvalidParameterError):
    """q=1 requested from the generalized-entropy families."""


class UnknownPresetError(SimulationError):
    """Preset name not registered."""


class ConfigError(SimulationError):
    """Config file unreadable or inconsistent."""


class IncompatibleBundlesError(SimulationError):
    """Two output bundles cannot be compared (different grids)."""
