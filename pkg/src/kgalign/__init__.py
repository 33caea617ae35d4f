"""Relation-aware entity alignment across knowledge graphs."""

from . import _kernels

__version__ = "0.1.0"
__all__ = ["kernel_backend", "__version__"]


def kernel_backend() -> str:
    """Active kernel backend: "cython" or "fallback"."""
    return _kernels.BACKEND
