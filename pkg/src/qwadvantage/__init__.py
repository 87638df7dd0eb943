"""Quantum-vs-classical walk hitting times on graphs, and neural classifiers
that predict the faster walker from the adjacency matrix."""

__version__ = "0.1.0"
