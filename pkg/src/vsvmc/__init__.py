"""Monte Carlo engine for sandwiched Volterra volatility models."""

from .errors import NumericalFailure, ValidationError, VSVError

__version__ = "0.1.0"

__all__ = ["NumericalFailure", "ValidationError", "VSVError", "__version__"]
