"""Backend selection for the tridiagonal kernels.

The compiled extension is used when it imports; otherwise the numpy
fallback.  Setting ``MAGWKB_PURE_PYTHON=1`` forces the fallback.
"""
from __future__ import annotations

import os
from types import ModuleType

from . import _kernels_py


def _load() -> tuple[ModuleType, str]:
    if os.environ.get("MAGWKB_PURE_PYTHON", "") not in ("", "0"):
        return _kernels_py, "python"
    try:
        from . import _kernels  # type: ignore[attr-defined]
    except ImportError:
        return _kernels_py, "python"
    return _kernels, "cython"


_impl, BACKEND = _load()


def get_backend(name: str | None = None) -> ModuleType:
    """Return the kernel module ``name`` ("cython" or "python"), default active."""
    if name is None:
        return _impl
    if name == "python":
        return _kernels_py
    if name == "cython":
        from . import _kernels  # type: ignore[attr-defined]
        return _kernels
    raise ValueError(f"unknown backend {name!r}")


sturm_count = _impl.sturm_count
bisect = _impl.bisect
inverse_iteration = _impl.inverse_iteration
