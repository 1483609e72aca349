"""Functional exponential-family regression: estimators, bounds and simulation harness."""

__version__ = "0.1.0"
