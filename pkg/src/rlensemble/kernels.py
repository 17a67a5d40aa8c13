"""Kernel backend selection.

The compiled extension is used when importable; set ``RLENSEMBLE_PURE_PYTHON=1``
to force the pure-Python fallback.
"""

from __future__ import annotations

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("RLENSEMBLE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        _compiled = None
    if _compiled is not None:
        _impl = _compiled
        BACKEND = "cython"

run_episode = _impl.run_episode
best_split = _impl.best_split


def get_backend(name: str | None = None):
    """Kernel module by name ("cython" or "python"); ``None`` gives the active one."""
    if name is None:
        return _impl
    if name == "python":
        return _kernels_py
    if name == "cython":
        from . import _kernels

        return _kernels
    raise ValueError(f"unknown kernel backend {name!r}")
