"""Structured-light dark-field microscopy: forward model, SIM reconstruction, sectioning."""

__version__ = "0.1.0"
