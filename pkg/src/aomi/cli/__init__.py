"""File formats, synthetic data and the command-line interface."""
from .main import main

__all__ = ["main"]
