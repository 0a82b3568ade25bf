"""Pick the compiled kernels when available, else the numpy fallback.

Set ``DCIZIP_PURE_PYTHON=1`` to force the fallback.
"""
import os

if os.environ.get("DCIZIP_PURE_PYTHON", "") not in ("", "0"):
    from . import _pykernels as kernels
    BACKEND = "python"
else:
    try:
        from . import _kernels as kernels
        BACKEND = "cython"
    except ImportError:  # extension not built
        from . import _pykernels as kernels
        BACKEND = "python"

__all__ = ["kernels", "BACKEND"]
