"""Falsify causal DAGs by comparing CI violations against node-permuted graphs."""

__version__ = "0.1.0"
