"""Odometers, their digit-permuting distortions, and exact finite-level checks on both."""

__version__ = "0.1.0"
