"""Fractional inspiratory time and respiratory rate from single-lead ECG."""

__version__ = "0.1.0"
