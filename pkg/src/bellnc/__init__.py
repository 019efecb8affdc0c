"""Noncontextuality inequalities for bipartite Bell scenarios and the
data pipeline that tests them: regularization, secondary procedures,
Monte Carlo error bars and unsteerability certification."""

__version__ = "0.1.0"
