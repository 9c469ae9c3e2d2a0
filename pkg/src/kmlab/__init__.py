"""Resource-bounded monotone complexity, sequence prediction and loss experiments."""

__version__ = "0.1.0"
