"""Blockchain-empowered MEC simulator with double-DQN user selection and hash allocation."""
from .kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"
__all__ = ["KERNEL_BACKEND", "__version__"]
