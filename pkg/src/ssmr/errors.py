"""Exception types shared across the toolkit."""


class SsmrError(Exception):
    """Base class for all toolkit errors."""


class DimensionMismatchError(SsmrError, ValueError):
    """An array argument does not match the model's declared dimensions."""


class ModelFormatError(SsmrError, ValueError):
    """A model/chart/config file is malformed; message names the offending field."""


class DivergenceError(SsmrError, RuntimeError):
    """State norm exceeded the blow-up threshold during integration."""

    def __init__(self, message, last_valid_time=None):
        super().__init__(message)
        self.last_valid_time = last_valid_time


class TrajectoryTooShortError(SsmrError, ValueError):
    """Too few samples remain for the requested operation."""


class IllPosedFitError(SsmrError, RuntimeError):
    """A regression problem is rank deficient beyond ridge rescue."""


class ResonanceError(SsmrError, RuntimeError):
    """A near-resonant eigenvalue combination makes a coefficient solve singular."""

    def __init__(self, message, multi_index=None, eigenvalue=None):
        super().__init__(message)
        self.multi_index = multi_index
        self.eigenvalue = eigenvalue


class FixedPointLostError(SsmrError, RuntimeError):
    """A fixed-point family lost its anchor somewhere in a parameter range."""


class HorizonOverflowError(SsmrError, RuntimeError):
    """A near-zero eigenvalue makes the bounded-solution horizon exceed the data span."""
