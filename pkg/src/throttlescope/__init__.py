"""Throttling detection from crowd-sourced TCP diagnostic measurements."""

__version__ = "0.1.0"
