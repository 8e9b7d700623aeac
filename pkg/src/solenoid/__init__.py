"""Numerics for the skew-product solenoid T(x, y) = (lap x mod 1, lam y + f(x))."""

from .dynamics import SystemParams, Word
from .trigpoly import TrigPoly

__version__ = "0.1.0"
FORMAT_VERSION = 1

__all__ = ["SystemParams", "TrigPoly", "Word", "__version__", "FORMAT_VERSION"]
