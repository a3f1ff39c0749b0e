"""OTOC Bell-pair protocol lab."""

__version__ = "0.1.0"
