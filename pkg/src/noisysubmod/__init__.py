"""Noisy non-oblivious local search for constrained monotone submodular maximization."""
__version__ = "0.1.0"
