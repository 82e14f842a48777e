"""Difference-of-submodular minimization via DC programming"""

__version__ = "1.0.0"
