"""Bayesian autoencoders for out-of-distribution detection.

Five model families (deterministic AE, VAE, MC-Dropout, Bayes by Backprop,
anchored ensemble), three reconstruction likelihoods, and the E(LL),
Var(LL), WAIC and Var(x_hat) OOD scores built on top of them.
"""

from .likelihood import LikelihoodKind

__version__ = "0.1.0"

__all__ = ["LikelihoodKind", "__version__"]
