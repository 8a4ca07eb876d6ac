"""Selects the compiled kernels when available, else the numpy fallback.

Set ``ORDEX_BACKEND=python`` to force the fallback.
"""

import os

from . import _kernels_py

if os.environ.get("ORDEX_BACKEND", "").lower() == "python":
    kernels = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as kernels  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        kernels = _kernels_py
        BACKEND = "python"

compose = kernels.compose
resolvent_sweep = kernels.resolvent_sweep
