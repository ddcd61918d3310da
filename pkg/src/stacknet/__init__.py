"""Combine predictions of black-box base models and estimate their reliability."""

__version__ = "0.1.0"
