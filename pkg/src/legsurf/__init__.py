"""Contact geometry and constrained area variation for discrete Legendrian surfaces."""

__version__ = "0.1.0"
