"""Backend dispatch for the hot kernels.

The compiled extension is preferred when importable; ``FOGCACHE_KERNELS``
overrides: ``c`` requires it (ImportError otherwise), ``python`` forces the
numpy fallback, anything else (or unset) auto-selects. ``BACKEND`` records
the choice.
"""

from __future__ import annotations

import os

from . import numpy_backend

_choice = os.environ.get("FOGCACHE_KERNELS", "auto").lower()
_compiled = None
if _choice != "python":
    try:
        from . import _ckernels as _compiled
    except ImportError:
        if _choice == "c":
            raise ImportError(
                "FOGCACHE_KERNELS=c but the compiled kernel extension is not built"
            )

BACKEND = "c" if _compiled is not None else "python"
_impl = _compiled if _compiled is not None else numpy_backend

pair_similarity = _impl.pair_similarity
ftrl_fit = _impl.ftrl_fit

__all__ = ["BACKEND", "pair_similarity", "ftrl_fit", "numpy_backend"]
