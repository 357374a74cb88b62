"""Selects the scan-kernel implementation at import time.

The compiled Cython kernels are preferred; the NumPy fallback is used when
the extension was not built.  Both expose the same module-level contract
(see ``_kernels_py``).  :func:`set_backend` exists for benchmarks and tests
that need to compare the two.
"""

from __future__ import annotations

from . import _kernels_py

try:
    from . import _kernels_cy

    _DEFAULT = _kernels_cy
except ImportError:
    _kernels_cy = None
    _DEFAULT = _kernels_py

_active = _DEFAULT


def get_backend():
    """The currently active kernel module."""
    return _active


def backend_name() -> str:
    return _active.BACKEND


def available_backends() -> tuple[str, ...]:
    return ("python",) if _kernels_cy is None else ("cython", "python")


def set_backend(name: str):
    """Switch kernels; returns the previously active module."""
    global _active
    previous = _active
    if name == "python":
        _active = _kernels_py
    elif name == "cython":
        if _kernels_cy is None:
            raise ValueError("compiled kernels are not available in this installation")
        _active = _kernels_cy
    else:
        raise ValueError(f"unknown backend {name!r}; choose from {available_backends()}")
    return previous
