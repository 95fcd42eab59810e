"""Grounded vision-to-text reasoning kernels, metrics and planted-region experiments."""

__version__ = "0.1.0"
