"""ADMM with physics-informed neural networks for nonsmooth PDE-constrained optimization."""

__version__ = "0.1.0"
