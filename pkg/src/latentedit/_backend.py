"""Backend selection for the hot numeric kernels.

The numba-compiled path is the default whenever numba imports cleanly.
Set ``LATENTEDIT_NUMBA=0`` in the environment to force the pure-numpy
fallback (useful for debugging and for the backend benchmark).
"""

import os

_flag = os.environ.get("LATENTEDIT_NUMBA", "1").strip().lower()
_WANT_NUMBA = _flag not in ("0", "false", "off", "no")

try:
    import numba as _numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba installed
    _numba = None
    HAS_NUMBA = False

NUMBA_ENABLED = _WANT_NUMBA and HAS_NUMBA


def njit(func):
    """Compile with numba (nopython, cached). Only call when numba is present.

    fastmath stays off: both backends must agree to float rounding.
    """
    return _numba.njit(func, cache=True, fastmath=False)
