"""Group sequential designs with ordered alternatives and stopping-aware estimation."""

__version__ = "0.1.0"
