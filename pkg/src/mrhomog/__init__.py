"""Periodic homogenization of magnetorheological suspensions."""

__version__ = "0.1.0"
