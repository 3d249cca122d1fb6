"""Optional numba acceleration for the hot numeric kernels.

Kernels are written against the numpy subset numba supports, so the same
source runs in two modes:

* jitted (default when numba is importable), or
* plain numpy, selected by setting ``SCIP_NO_NUMBA=1`` in the environment
  before import.

``benchmarks/bench_kernels.py`` compares the two paths.
"""

import os

NUMBA_ENABLED = False

if os.environ.get("SCIP_NO_NUMBA", "").strip() not in ("", "0"):
    _njit = None
else:
    try:
        from numba import njit as _njit

        NUMBA_ENABLED = True
    except ImportError:
        _njit = None


def jit_kernel(func):
    """Compile ``func`` with numba when enabled, else return it unchanged."""
    if _njit is None:
        return func
    return _njit(cache=True)(func)
