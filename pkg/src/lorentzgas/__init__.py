"""Free path length statistics of the periodic Lorentz gas at small scatterer radius."""

__version__ = "0.1.0"
