"""Simulator and test harness for classical-client blind quantum computing."""
from .kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
