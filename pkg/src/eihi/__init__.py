"""Two-stage background-robust feature learning at desk scale."""

__version__ = "0.1.0"
