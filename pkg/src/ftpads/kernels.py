"""Kernel dispatch: the compiled extension when built, numpy otherwise.

Set ``FTPADS_PURE=1`` to force the fallback.
"""

from __future__ import annotations

import os

from . import _kernels_py as fallback

compiled = None
if os.environ.get("FTPADS_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as compiled  # type: ignore[no-redef]
    except ImportError:
        compiled = None

_impl = compiled if compiled is not None else fallback
BACKEND = "compiled" if compiled is not None else "python"

subset_rows = _impl.subset_rows
count_survivals = _impl.count_survivals
place_from_uniforms = fallback.place_from_uniforms
