"""Exact projective conditions, martingale approximation and maximal
inequalities for functionals of finite stationary Markov chains."""

__version__ = "0.1.0"
