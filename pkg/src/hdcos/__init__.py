"""Multilayer perceptrons built from Hadamard-diagonal layers and cosine
activations, trained in plaintext and evaluated under two-party additive
secret sharing."""

__version__ = "0.1.0"
