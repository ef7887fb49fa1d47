"""Stochastic Lipschitz dynamic programming for multistage stochastic MILPs."""

__version__ = "0.1.0"
