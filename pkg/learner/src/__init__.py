"""Bayesian structure learning over sparse DAG equivalence classes."""

__version__ = "0.1.0"
