"""Physics-guided neural network identification of inverse dynamics for feedforward control."""

__version__ = "0.1.0"
