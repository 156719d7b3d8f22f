"""stagfv: staggered finite-difference/finite-volume solvers."""

__version__ = "0.3.0"
