"""Variable-bandwidth kernel density estimation with smooth clipping."""

__version__ = "0.1.0"
