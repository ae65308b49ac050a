"""Backend selection: compiled extension if available, NumPy fallback otherwise.

Set RFPHI4_PURE_PYTHON=1 to force the fallback (used by the benchmark and
the cross-backend tests).
"""

from __future__ import annotations

import os

if os.environ.get("RFPHI4_PURE_PYTHON", "").strip() in ("1", "true", "yes"):
    from . import _kernels_py as kernels
else:
    try:
        from . import _kernels as kernels  # type: ignore[attr-defined]
    except ImportError:
        from . import _kernels_py as kernels

BACKEND_NAME = kernels.BACKEND_NAME


def get_backend(pure_python: bool | None = None):
    """Return the kernel module (optionally forcing one implementation)."""
    if pure_python is None:
        return kernels
    if pure_python:
        from . import _kernels_py
        return _kernels_py
    from . import _kernels  # raises ImportError if not built
    return _kernels
