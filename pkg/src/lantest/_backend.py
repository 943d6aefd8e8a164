"""Select the recursion kernel at import time.

The compiled extension is used when it was built; setting
``LANTEST_PURE_PYTHON=1`` forces the pure-Python fallback.
"""
import os

if os.environ.get("LANTEST_PURE_PYTHON") == "1":
    from lantest._kernels_py import ar_recursion

    BACKEND = "python"
else:
    try:
        from lantest._kernels import ar_recursion

        BACKEND = "cython"
    except ImportError:
        from lantest._kernels_py import ar_recursion

        BACKEND = "python"

__all__ = ["ar_recursion", "BACKEND"]
