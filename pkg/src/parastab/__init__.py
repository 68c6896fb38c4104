"""Numerical laboratory for simultaneous source and initial-value recovery
in a 1D parabolic problem with lateral and terminal observations."""

__version__ = "0.1.0"
