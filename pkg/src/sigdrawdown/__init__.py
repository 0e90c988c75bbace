"""Drawdown approximation on path signatures and a drawdown-aware VAE
market generator."""

__version__ = "0.1.0"
