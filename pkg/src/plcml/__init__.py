"""Power-line communication emulation and machine-learning experiments."""

__version__ = "0.1.0"
