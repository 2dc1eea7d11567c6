"""Backend selection for the filter inner loops.

Prefers the compiled extension; falls back to the numpy implementation when
the extension is missing or when SMOOTHDEF_PURE_PYTHON is set. Both backends
implement the same contracts and agree to floating-point roundoff.
"""

from __future__ import annotations

import os

if os.environ.get("SMOOTHDEF_PURE_PYTHON"):
    from . import _kernels_py as _impl
else:
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]
    except ImportError:
        from . import _kernels_py as _impl  # type: ignore[no-redef]

BACKEND = _impl.BACKEND_NAME

median_filter = _impl.median_filter
bilateral_filter = _impl.bilateral_filter
nlm_filter = _impl.nlm_filter
diffusion_step = _impl.diffusion_step
