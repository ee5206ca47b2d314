"""Sparse Bayesian learning with preconditioned stochastic-gradient Langevin dynamics.

The package samples network weights under a spike-and-slab (Laplace spike, Gaussian
slab) prior with SGLD or preconditioned SGLD, and tunes the prior's latent variables
by stochastic approximation.  Two experiment families ship with it: sparse linear
regression on a correlated design, and a multilayer-perceptron surrogate that maps
heterogeneous permeability fields to Darcy face fluxes.
"""

__version__ = "0.1.0"
