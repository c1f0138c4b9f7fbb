"""Network-wide probabilistic dynamic line rating forecasting and grid operation."""

__version__ = "0.1.0"
