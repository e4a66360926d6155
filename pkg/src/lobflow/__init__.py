"""Continuum limit-order-book dynamics: transport solver, similarity profiles
and recovery-scaling analysis."""

__version__ = "0.1.0"
