"""Euler simulation of jump-diffusions with stochastic drift, convergence studies and mollifier checks."""

__version__ = "0.1.0"
