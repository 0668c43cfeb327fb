"""Kernel backend selection.

The recurrence kernels (selective scan, causal depthwise conv) exist twice:
a numba @njit build and a pure-numpy build.  ``SAMBA_BACKEND=numpy`` forces
the fallback; the default is numba when it imports, numpy otherwise.  The
choice is made once at import time so a process never mixes backends.
"""

from __future__ import annotations

import os
import warnings

_requested = os.environ.get("SAMBA_BACKEND", "").strip().lower()

if _requested not in ("", "numba", "numpy"):
    raise ValueError(
        f"SAMBA_BACKEND={_requested!r} not recognized (expected 'numba' or 'numpy')"
    )

if _requested == "numpy":
    from . import _kernels_numpy as _kernels

    BACKEND = "numpy"
else:
    try:
        from . import _kernels_numba as _kernels

        BACKEND = "numba"
    except ImportError:
        if _requested == "numba":
            raise
        warnings.warn("numba unavailable, falling back to pure-numpy kernels")
        from . import _kernels_numpy as _kernels

        BACKEND = "numpy"

scan_forward = _kernels.scan_forward
scan_backward = _kernels.scan_backward
chunked_scan_forward = _kernels.chunked_scan_forward
conv1d_forward = _kernels.conv1d_forward
conv1d_backward = _kernels.conv1d_backward
discretize_forward = _kernels.discretize_forward
discretize_backward = _kernels.discretize_backward
