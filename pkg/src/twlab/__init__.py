"""Two-weight dyadic analysis lab."""

__version__ = "0.1.0"
