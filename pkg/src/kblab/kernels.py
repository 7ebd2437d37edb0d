"""Kernel selection: compiled extension when available, NumPy fallback otherwise.

Set KBL_PURE_PYTHON=1 to force the fallback (useful for benchmarking and
for verifying the two implementations agree).
"""

from __future__ import annotations

import os

from . import _kernels_py as fallback

if os.environ.get("KBL_PURE_PYTHON"):
    compiled = None
else:
    try:
        from . import _kernels as compiled  # type: ignore[no-redef]
    except ImportError:
        compiled = None

_active = compiled if compiled is not None else fallback

IMPLEMENTATION = "compiled" if compiled is not None else "python"

series_accumulate = _active.series_accumulate
fd_burgers_run = _active.fd_burgers_run
