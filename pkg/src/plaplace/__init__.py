"""p-Poisson solver and estimate verifier on discrete metric-measure domains."""

from .mesh import Ball, Circle, Domain, PeriodicGrid, WeightedGraph, ball, build_torus, load_graph

__version__ = "0.1.0"
