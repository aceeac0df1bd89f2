"""Affordance-guided manipulation demonstration generation and benchmarking."""

__version__ = "0.1.0"
