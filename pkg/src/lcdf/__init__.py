"""Low coordinate degree advantages, channel overlaps and spiked-matrix spectra."""

from . import advantage, channels, efron_stein, priors, spectral, truncexp
from .errors import DomainError, NumericalError, ValidationError

__version__ = "0.1.0"

__all__ = [
    "advantage",
    "channels",
    "efron_stein",
    "priors",
    "spectral",
    "truncexp",
    "DomainError",
    "NumericalError",
    "ValidationError",
]
