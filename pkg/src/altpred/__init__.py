"""Aircraft landing time prediction from trajectory images."""

__version__ = "0.1.0"
