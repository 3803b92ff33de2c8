"""Monitored free-fermion chains under quantum-jump unravelling.

Simulation and cross-validation toolkit: Gaussian trajectories, replicated
dense master equations, Lindblad moments, symmetry classification and
sigma-model coefficients for the density-monitored Ising chain.
"""

__version__ = "0.1.0"

from .model import ModelParams

__all__ = ["ModelParams", "__version__"]
