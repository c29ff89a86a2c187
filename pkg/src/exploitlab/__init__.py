"""Kuhn/Leduc exploitation lab: engines, solvers, oracles, training, evaluation."""

__version__ = "0.1.0"
